use rand::Rng;

use super::{ModelDims, Variant};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// One fully connected layer: `weight` is `[d_in × d_out]`, `bias` is `[d_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    fn glorot<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        Layer {
            weight: Tensor::glorot(d_in, d_out, rng),
            bias: Tensor::zeros(vec![d_out]),
        }
    }
}

/// `α_k`, `β_k`, `γ_k`, `θ_k` for one user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserParams {
    pub semantic_encoder: Vec<Layer>,
    pub jsc_encoder: Vec<Layer>,
    pub jsc_decoder: Vec<Layer>,
    pub semantic_decoder: Vec<Layer>,
}

impl UserParams {
    fn stages(&self) -> [&Vec<Layer>; 4] {
        [&self.semantic_encoder, &self.jsc_encoder, &self.jsc_decoder, &self.semantic_decoder]
    }

    fn stages_mut(&mut self) -> [&mut Vec<Layer>; 4] {
        [
            &mut self.semantic_encoder,
            &mut self.jsc_encoder,
            &mut self.jsc_decoder,
            &mut self.semantic_decoder,
        ]
    }
}

/// All trainable parameters of one scheme variant.
#[derive(Clone, Debug, PartialEq)]
pub struct TransceiverParams {
    pub variant: Variant,
    pub dims: ModelDims,
    pub users: Vec<UserParams>,
}

/// `(d_in, d_out)` per layer for each of the four stages.
pub(super) fn layer_shapes(variant: Variant, dims: &ModelDims) -> [Vec<(usize, usize)>; 4] {
    let h = dims.hidden;
    let csi = dims.csi_len();
    let sym = dims.symbol_width(variant);
    let jsc_enc = if variant.csi_at_transmitter() {
        vec![(h + csi, h), (h, sym)]
    } else {
        vec![(h, sym)]
    };
    let dec_in = dims.received_width(variant) + if variant.csi_at_receiver() { csi } else { 0 };
    [
        vec![(dims.image_len, h)],
        jsc_enc,
        vec![(dec_in, h), (h, h)],
        vec![(h, h), (h, dims.image_len)],
    ]
}

impl TransceiverParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(variant: Variant, dims: ModelDims, rng: &mut R) -> Result<Self> {
        dims.validate(variant)?;
        let shapes = layer_shapes(variant, &dims);
        let users = (0..dims.users)
            .map(|_| {
                let mut stage = |i: usize| shapes[i].iter().map(|&(a, b)| Layer::glorot(a, b, rng)).collect::<Vec<_>>();
                UserParams {
                    semantic_encoder: stage(0),
                    jsc_encoder: stage(1),
                    jsc_decoder: stage(2),
                    semantic_decoder: stage(3),
                }
            })
            .collect();
        Ok(TransceiverParams { variant, dims, users })
    }

    /// Every tensor in checkpoint order: user, stage, layer, weight then bias.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.users
            .iter()
            .flat_map(|u| u.stages())
            .flat_map(|s| s.iter())
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.users
            .iter_mut()
            .flat_map(|u| u.stages_mut())
            .flat_map(|s| s.iter_mut())
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors().len()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Rebuilds parameters from tensors in [`tensors`](Self::tensors) order,
    /// checking every shape.
    pub fn from_tensors(variant: Variant, dims: ModelDims, tensors: Vec<Tensor>) -> Result<Self> {
        dims.validate(variant)?;
        let shapes = layer_shapes(variant, &dims);
        let per_user: usize = shapes.iter().map(|s| 2 * s.len()).sum();
        if tensors.len() != per_user * dims.users {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors for {} users of {variant}, found {}",
                per_user * dims.users,
                dims.users,
                tensors.len()
            )));
        }
        let mut it = tensors.into_iter();
        let mut users = Vec::with_capacity(dims.users);
        for _ in 0..dims.users {
            let mut stages: Vec<Vec<Layer>> = Vec::with_capacity(4);
            for stage in &shapes {
                let mut layers = Vec::with_capacity(stage.len());
                for &(a, b) in stage {
                    let weight = it.next().expect("count checked");
                    let bias = it.next().expect("count checked");
                    if weight.shape() != [a, b] || bias.shape() != [b] {
                        return Err(Error::Checkpoint(format!(
                            "layer shape {:?}/{:?} does not match expected [{a}, {b}]/[{b}]",
                            weight.shape(),
                            bias.shape()
                        )));
                    }
                    layers.push(Layer { weight, bias });
                }
                stages.push(layers);
            }
            let mut s = stages.into_iter();
            users.push(UserParams {
                semantic_encoder: s.next().unwrap(),
                jsc_encoder: s.next().unwrap(),
                jsc_decoder: s.next().unwrap(),
                semantic_decoder: s.next().unwrap(),
            });
        }
        Ok(TransceiverParams { variant, dims, users })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn shapes_of(layers: &[Layer]) -> Vec<Vec<usize>> {
        layers.iter().flat_map(|l| [l.weight.shape().to_vec(), l.bias.shape().to_vec()]).collect()
    }

    #[test]
    fn dimensions_chain() {
        let dims = ModelDims::standard();
        for v in Variant::ALL {
            let p = TransceiverParams::init(v, dims, &mut substream(1, "init", &[])).unwrap();
            let u = &p.users[0];
            assert_eq!(u.semantic_encoder[0].weight.shape(), [784, 256]);
            assert_eq!(u.jsc_encoder.last().unwrap().weight.shape(), [256, 64]);
            assert_eq!(u.jsc_decoder.last().unwrap().weight.shape(), [256, 256]);
            assert_eq!(u.semantic_decoder.last().unwrap().weight.shape(), [256, 784]);
            assert_eq!(p.users.len(), 2);
        }
    }

    #[test]
    fn csi_free_and_csir_share_encoder_shapes() {
        let dims = ModelDims::standard();
        let mut rng = substream(1, "init", &[]);
        let free = TransceiverParams::init(Variant::CsiFree, dims, &mut rng).unwrap();
        let csir = TransceiverParams::init(Variant::Csir, dims, &mut rng).unwrap();
        let csitr = TransceiverParams::init(Variant::Csitr, dims, &mut rng).unwrap();
        let (f, r, t) = (&free.users[0], &csir.users[0], &csitr.users[0]);
        assert_eq!(shapes_of(&f.semantic_encoder), shapes_of(&r.semantic_encoder));
        assert_eq!(shapes_of(&f.jsc_encoder), shapes_of(&r.jsc_encoder));
        assert_eq!(shapes_of(&f.jsc_encoder).len(), 2);
        assert_eq!(shapes_of(&t.jsc_encoder).len(), shapes_of(&r.jsc_encoder).len() + 2);
        assert_eq!(t.jsc_encoder[0].weight.shape(), [256 + 32, 256]);
        assert_eq!(t.jsc_encoder[0].bias.shape(), [256]);
        assert_eq!(r.jsc_decoder[0].weight.shape(), [96, 256]);
        assert_eq!(f.jsc_decoder[0].weight.shape(), [64, 256]);
    }

    #[test]
    fn from_tensors_round_trips_and_rejects_bad_shapes() {
        let dims = ModelDims {
            hidden: 8,
            image_len: 12,
            block_len: 2,
            ..ModelDims::standard()
        };
        let p = TransceiverParams::init(Variant::Csitr, dims, &mut substream(3, "init", &[])).unwrap();
        let tensors: Vec<Tensor> = p.tensors().into_iter().cloned().collect();
        let q = TransceiverParams::from_tensors(Variant::Csitr, dims, tensors.clone()).unwrap();
        assert_eq!(p, q);
        assert!(TransceiverParams::from_tensors(Variant::Csir, dims, tensors.clone()).is_err());
        let mut swapped = tensors;
        swapped.swap(0, 1);
        assert!(TransceiverParams::from_tensors(Variant::Csitr, dims, swapped).is_err());
    }
}

use rand::Rng;

use super::{ModelDims, TransceiverParams, Variant};
use crate::channel::{
    apply_filtered_channel, apply_interference_channel, design_precoders_filters, ChannelRealization,
    PrecoderAlgorithm, PrecoderOptions,
};
use crate::diffcore::{Activation, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Weight and bias handles of one layer on a tape.
pub type LayerVars = (Var, Var);

/// One user's parameters recorded on a tape, stage by stage.
#[derive(Clone, Debug)]
pub struct BoundUser {
    pub semantic_encoder: Vec<LayerVars>,
    pub jsc_encoder: Vec<LayerVars>,
    pub jsc_decoder: Vec<LayerVars>,
    pub semantic_decoder: Vec<LayerVars>,
}

#[derive(Clone, Debug)]
pub struct BoundParams {
    pub variant: Variant,
    pub dims: ModelDims,
    pub users: Vec<BoundUser>,
    vars: Vec<Var>,
}

impl BoundParams {
    /// Every parameter handle in [`TransceiverParams::tensors`] order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Records `params` on `tape`, as trainable leaves or as constants.
pub fn bind(tape: &mut Tape, params: &TransceiverParams, trainable: bool) -> BoundParams {
    let mut vars = Vec::with_capacity(params.tensor_count());
    let mut leaf = |t: &Tensor| {
        let v = if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
        vars.push(v);
        v
    };
    let users = params
        .users
        .iter()
        .map(|u| {
            let mut stage = |layers: &[super::Layer]| layers.iter().map(|l| (leaf(&l.weight), leaf(&l.bias))).collect();
            BoundUser {
                semantic_encoder: stage(&u.semantic_encoder),
                jsc_encoder: stage(&u.jsc_encoder),
                jsc_decoder: stage(&u.jsc_decoder),
                semantic_decoder: stage(&u.semantic_decoder),
            }
        })
        .collect();
    BoundParams {
        variant: params.variant,
        dims: params.dims,
        users,
        vars,
    }
}

/// Affine layers with ReLU between them and `last` after the final one.
fn stack(tape: &mut Tape, mut x: Var, layers: &[LayerVars], last: Option<Activation>) -> Result<Var> {
    for (i, &(w, b)) in layers.iter().enumerate() {
        x = tape.affine(x, w, b)?;
        let act = if i + 1 < layers.len() { Some(Activation::Relu) } else { last };
        if let Some(a) = act {
            x = tape.activation(x, a);
        }
    }
    Ok(x)
}

fn with_csi(tape: &mut Tape, x: Var, csi: Option<Var>, wanted: bool, stage: &str) -> Result<Var> {
    match (csi, wanted) {
        (Some(c), true) => tape.concat_rows(x, c),
        (None, false) => Ok(x),
        (Some(_), false) => Err(Error::Dimension(format!("{stage}: channel state given to a variant that does not use it there"))),
        (None, true) => Err(Error::Dimension(format!("{stage}: variant needs channel state"))),
    }
}

/// `f_α`: one affine layer plus ReLU.
pub fn semantic_encode(tape: &mut Tape, images: Var, alpha: &[LayerVars]) -> Result<Var> {
    stack(tape, images, alpha, Some(Activation::Relu))
}

/// `f_β`: optional concat with CSI, then the affine stack down to `2·rows·N_B` reals.
pub fn jsc_encode(tape: &mut Tape, features: Var, csi: Option<Var>, beta: &[LayerVars], variant: Variant) -> Result<Var> {
    let x = with_csi(tape, features, csi, variant.csi_at_transmitter(), "jsc_encode")?;
    stack(tape, x, beta, None)
}

/// Scales each sample to `‖X_k‖_F = √(P·rows·N_B)`.
///
/// The packed layout (real parts, then imaginary parts, row-major over
/// antenna and symbol) already is the `rows × N_B` complex block, so the
/// reshape is only a width check.
pub fn power_normalize_reshape(tape: &mut Tape, x: Var, power: f64, rows: usize, block_len: usize) -> Result<Var> {
    let width = 2 * rows * block_len;
    match *tape.shape(x) {
        [_, w] if w == width => {}
        ref s => return Err(Error::shape("power_normalize_reshape", s, &[0, width])),
    }
    tape.l2_normalize_scale(x, (power * (rows * block_len) as f64).sqrt())
}

/// `g_γ`: optional concat with CSI, affine + ReLU, affine.
pub fn jsc_decode(tape: &mut Tape, received: Var, csi: Option<Var>, gamma: &[LayerVars], variant: Variant) -> Result<Var> {
    let x = with_csi(tape, received, csi, variant.csi_at_receiver(), "jsc_decode")?;
    stack(tape, x, gamma, None)
}

/// `g_θ`: affine + ReLU, affine + tanh.
pub fn semantic_decode(tape: &mut Tape, features: Var, theta: &[LayerVars]) -> Result<Var> {
    stack(tape, features, theta, Some(Activation::Tanh))
}

/// Link settings that are not part of the learned model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PassOptions {
    /// Per-symbol transmit power `P`.
    pub power: f64,
    pub precoder_iterations: usize,
    pub precoder_algorithm: PrecoderAlgorithm,
}

impl Default for PassOptions {
    fn default() -> Self {
        PassOptions {
            power: 1.0,
            precoder_iterations: 20,
            precoder_algorithm: PrecoderAlgorithm::MinLeakage,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Normalized transmitted blocks, one per user.
    pub symbols: Vec<Var>,
    /// What each decoder sees before its networks.
    pub received: Vec<Var>,
    /// Reconstructed images in `(−1, 1)`.
    pub reconstructions: Vec<Var>,
}

/// Full multi-user pass on one tape.
///
/// `images[k]` is user `k`'s `[batch × n]` batch; sample `b` crosses
/// `channels[b]`. For the precoded variant the precoders are designed first
/// (sample by sample), then noise is drawn, all from `rng`.
pub fn forward_pass<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &BoundParams,
    images: &[Var],
    channels: &[ChannelRealization],
    opts: &PassOptions,
    rng: &mut R,
) -> Result<ForwardOutput> {
    let (variant, dims) = (params.variant, params.dims);
    if images.len() != dims.users {
        return Err(Error::Dimension(format!("{} image batches for {} users", images.len(), dims.users)));
    }
    let batch = channels.len();
    for &s in images {
        if tape.shape(s) != [batch, dims.image_len] {
            return Err(Error::shape("forward_pass images", tape.shape(s), &[batch, dims.image_len]));
        }
    }
    if let Some(h) = channels.iter().find(|h| (h.users(), h.tx(), h.rx()) != (dims.users, dims.tx, dims.rx)) {
        return Err(Error::Dimension(format!(
            "channel is {}-user {}×{}, model expects {}-user {}×{}",
            h.users(),
            h.rx(),
            h.tx(),
            dims.users,
            dims.rx,
            dims.tx
        )));
    }

    let csi = if variant.csi_at_transmitter() || variant.csi_at_receiver() {
        let data: Vec<f64> = channels.iter().flat_map(|h| h.flatten_csi()).collect();
        Some(tape.constant(Tensor::matrix(batch, dims.csi_len(), data)?))
    } else {
        None
    };
    let tx_csi = csi.filter(|_| variant.csi_at_transmitter());
    let rx_csi = csi.filter(|_| variant.csi_at_receiver());

    let rows = dims.symbol_rows(variant);
    let mut symbols = Vec::with_capacity(dims.users);
    for (user, &s) in params.users.iter().zip(images) {
        let f = semantic_encode(tape, s, &user.semantic_encoder)?;
        let x = jsc_encode(tape, f, tx_csi, &user.jsc_encoder, variant)?;
        symbols.push(power_normalize_reshape(tape, x, opts.power, rows, dims.block_len)?);
    }

    let received = match variant {
        Variant::InterferenceFree => symbols.clone(),
        Variant::SemiConventional => {
            let popts = PrecoderOptions {
                streams: dims.rx,
                iterations: opts.precoder_iterations,
                algorithm: opts.precoder_algorithm,
                power: opts.power,
            };
            let sets = channels
                .iter()
                .map(|h| design_precoders_filters(h, &popts, rng).map(|d| d.set))
                .collect::<Result<Vec<_>>>()?;
            apply_filtered_channel(tape, &symbols, channels, &sets, dims.block_len, rng)?
        }
        _ => apply_interference_channel(tape, &symbols, channels, dims.block_len, rng)?,
    };

    let mut reconstructions = Vec::with_capacity(dims.users);
    for (user, &y) in params.users.iter().zip(&received) {
        let g = jsc_decode(tape, y, rx_csi, &user.jsc_decoder, variant)?;
        reconstructions.push(semantic_decode(tape, g, &user.semantic_decoder)?);
    }
    Ok(ForwardOutput {
        symbols,
        received,
        reconstructions,
    })
}

/// Inference-only pass: parameters as constants, reconstructions copied out.
pub fn reconstruct<R: Rng + ?Sized>(
    params: &TransceiverParams,
    images: &[Tensor],
    channels: &[ChannelRealization],
    opts: &PassOptions,
    rng: &mut R,
) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let bound = bind(&mut tape, params, false);
    let vars: Vec<Var> = images.iter().map(|s| tape.constant(s.clone())).collect();
    let out = forward_pass(&mut tape, &bound, &vars, channels, opts, rng)?;
    Ok(out.reconstructions.iter().map(|&v| tape.get(v).to_tensor()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::sample_channel;
    use crate::rng::substream;

    fn tiny() -> ModelDims {
        ModelDims {
            users: 2,
            tx: 2,
            rx: 2,
            block_len: 2,
            hidden: 4,
            image_len: 6,
        }
    }

    /// Glorot init plus small random biases so tiny nets never emit a zero row.
    fn init(v: Variant, dims: ModelDims, seed: u64) -> TransceiverParams {
        let mut rng = substream(seed, "init", &[]);
        let mut p = TransceiverParams::init(v, dims, &mut rng).unwrap();
        for t in p.tensors_mut() {
            if t.shape().len() == 1 {
                t.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
            }
        }
        p
    }

    fn images(dims: &ModelDims, batch: usize, seed: u64) -> Vec<Tensor> {
        let mut rng = substream(seed, "images", &[]);
        (0..dims.users)
            .map(|_| {
                Tensor::matrix(batch, dims.image_len, (0..batch * dims.image_len).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .unwrap()
            })
            .collect()
    }

    fn channels(dims: &ModelDims, batch: usize, var: f64, seed: u64) -> Vec<ChannelRealization> {
        let mut rng = substream(seed, "channel", &[]);
        (0..batch).map(|_| sample_channel(dims.users, dims.tx, dims.rx, var, &mut rng)).collect()
    }

    fn run(params: &TransceiverParams, batch: usize, var: f64, seed: u64) -> (Tape, ForwardOutput, Vec<Var>) {
        let mut tape = Tape::new();
        let bound = bind(&mut tape, params, true);
        let imgs = images(&params.dims, batch, seed);
        let vars: Vec<Var> = imgs.into_iter().map(|t| tape.constant(t)).collect();
        let hs = channels(&params.dims, batch, var, seed);
        let out = forward_pass(&mut tape, &bound, &vars, &hs, &PassOptions::default(), &mut substream(seed, "noise", &[])).unwrap();
        (tape, out, vars)
    }

    #[test]
    fn power_constraint_holds_for_every_variant() {
        for v in Variant::ALL {
            let p = init(v, tiny(), 5);
            let (tape, out, _) = run(&p, 3, 0.5, 11);
            let rows = p.dims.symbol_rows(v);
            for &x in &out.symbols {
                for r in tape.get(x).to_tensor().data().chunks(2 * rows * 2) {
                    let e: f64 = r.iter().map(|a| a * a).sum();
                    assert!((e - (rows * 2) as f64).abs() < 1e-9, "{v}: {e}");
                }
            }
            for &s in &out.reconstructions {
                assert!(tape.value(s).iter().all(|y| y.abs() < 1.0));
                assert_eq!(tape.shape(s), [3, 6]);
            }
        }
    }

    #[test]
    fn power_normalize_examples() {
        let mut t = Tape::new();
        let ones = t.constant(Tensor::filled(vec![1, 64], 1.0));
        let y = power_normalize_reshape(&mut t, ones, 1.0, 2, 16).unwrap();
        let n: f64 = t.value(y).iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((n - 32f64.sqrt()).abs() < 1e-12);
        assert!(t.value(y).windows(2).all(|w| w[0] == w[1]));
        let bad = t.constant(Tensor::filled(vec![1, 60], 1.0));
        assert!(power_normalize_reshape(&mut t, bad, 1.0, 2, 16).is_err());
        let zero = t.constant(Tensor::zeros(vec![1, 64]));
        assert!(matches!(power_normalize_reshape(&mut t, zero, 1.0, 2, 16), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn standard_shape_chain() {
        let p = TransceiverParams::init(Variant::InterferenceFree, ModelDims::standard(), &mut substream(1, "init", &[])).unwrap();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &p, false);
        let s = tape.constant(Tensor::zeros(vec![2, 784]));
        let u = &bound.users[0];
        let f = semantic_encode(&mut tape, s, &u.semantic_encoder).unwrap();
        assert_eq!(tape.shape(f), [2, 256]);
        assert!(tape.value(f).iter().all(|&v| v == 0.0));
        let x = jsc_encode(&mut tape, f, None, &u.jsc_encoder, p.variant).unwrap();
        assert_eq!(tape.shape(x), [2, 64]);
        let g = jsc_decode(&mut tape, x, None, &u.jsc_decoder, p.variant).unwrap();
        assert_eq!(tape.shape(g), [2, 256]);
        let out = semantic_decode(&mut tape, g, &u.semantic_decoder).unwrap();
        assert_eq!(tape.shape(out), [2, 784]);
    }

    #[test]
    fn csi_must_match_variant() {
        let p = TransceiverParams::init(Variant::Csir, ModelDims::standard(), &mut substream(1, "init", &[])).unwrap();
        let mut tape = Tape::new();
        let bound = bind(&mut tape, &p, false);
        let f = tape.constant(Tensor::zeros(vec![1, 256]));
        let csi = tape.constant(Tensor::zeros(vec![1, 32]));
        let u = &bound.users[0];
        assert!(jsc_encode(&mut tape, f, Some(csi), &u.jsc_encoder, Variant::Csir).is_err());
        let y = tape.constant(Tensor::zeros(vec![1, 64]));
        assert!(jsc_decode(&mut tape, y, None, &u.jsc_decoder, Variant::Csir).is_err());
        let g = jsc_decode(&mut tape, y, Some(csi), &u.jsc_decoder, Variant::Csir).unwrap();
        assert!(tape.value(g).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut p = init(Variant::CsiFree, tiny(), 1);
        for t in p.users[0].semantic_decoder.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]) {
            t.data_mut().fill(0.0);
        }
        let (tape, out, _) = run(&p, 2, 0.1, 3);
        assert!(tape.value(out.reconstructions[0]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_channel_matches_interference_free() {
        let dims = ModelDims { users: 1, ..tiny() };
        let free = init(Variant::CsiFree, dims, 8);
        let mut ideal = free.clone();
        ideal.variant = Variant::InterferenceFree;
        let imgs = images(&dims, 4, 2);
        let identity = vec![ChannelRealization::isolated_identity(1, 2, 0.0); 4];
        let a = reconstruct(&free, &imgs, &identity, &PassOptions::default(), &mut substream(0, "noise", &[])).unwrap();
        let b = reconstruct(&ideal, &imgs, &identity, &PassOptions::default(), &mut substream(1, "noise", &[])).unwrap();
        for (x, y) in a[0].data().iter().zip(b[0].data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn interference_free_ignores_noise() {
        let p = init(Variant::InterferenceFree, tiny(), 8);
        let imgs = images(&p.dims, 3, 2);
        let a = reconstruct(&p, &imgs, &channels(&p.dims, 3, 10.0, 1), &PassOptions::default(), &mut substream(0, "n", &[])).unwrap();
        let b = reconstruct(&p, &imgs, &channels(&p.dims, 3, 0.01, 2), &PassOptions::default(), &mut substream(1, "n", &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn every_parameter_receives_gradient() {
        for v in Variant::ALL {
            let p = init(v, tiny(), 4);
            let mut tape = Tape::new();
            let bound = bind(&mut tape, &p, true);
            let imgs = images(&p.dims, 8, 9);
            let vars: Vec<Var> = imgs.iter().map(|t| tape.constant(t.clone())).collect();
            let hs = channels(&p.dims, 8, 0.1, 9);
            let out = forward_pass(&mut tape, &bound, &vars, &hs, &PassOptions::default(), &mut substream(9, "noise", &[])).unwrap();
            let mut total = None;
            for (&r, &s) in out.reconstructions.iter().zip(&vars) {
                let l = tape.mse_loss(r, s).unwrap();
                total = Some(match total {
                    None => l,
                    Some(t) => tape.add(t, l).unwrap(),
                });
            }
            tape.backward(total.unwrap()).unwrap();
            for (i, &pv) in bound.vars().iter().enumerate() {
                let g = tape.grad(pv).unwrap();
                assert!(g.iter().any(|&x| x != 0.0), "{v}: tensor {i} has zero gradient");
            }
        }
    }

    #[test]
    fn full_pass_gradient_matches_finite_differences() {
        for v in Variant::ALL {
            check_pass_gradient(init(v, tiny(), 6));
        }
    }

    fn check_pass_gradient(p: TransceiverParams) {
        let imgs = images(&p.dims, 3, 4);
        let hs = channels(&p.dims, 3, 0.2, 4);
        let loss = |params: &TransceiverParams, tape: &mut Tape| -> (BoundParams, Var) {
            let bound = bind(tape, params, true);
            let vars: Vec<Var> = imgs.iter().map(|t| tape.constant(t.clone())).collect();
            let out = forward_pass(tape, &bound, &vars, &hs, &PassOptions::default(), &mut substream(4, "noise", &[])).unwrap();
            let a = tape.mse_loss(out.reconstructions[0], vars[0]).unwrap();
            let b = tape.mse_loss(out.reconstructions[1], vars[1]).unwrap();
            let b = tape.scale(b, 0.3);
            (bound, tape.add(a, b).unwrap())
        };
        let mut tape = Tape::new();
        let (bound, l) = loss(&p, &mut tape);
        tape.backward(l).unwrap();
        let h = 1e-5;
        for (ti, &pv) in bound.vars().iter().enumerate() {
            let analytic = tape.grad(pv).unwrap().to_vec();
            let n = analytic.len();
            let mut numeric = vec![0.0; n];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let eval = |delta: f64| {
                    let mut q = p.clone();
                    q.tensors_mut()[ti].data_mut()[i] += delta;
                    let mut t = Tape::new();
                    let (_, l) = loss(&q, &mut t);
                    t.value(l)[0]
                };
                *slot = (eval(h) - eval(-h)) / (2.0 * h);
            }
            let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
            assert!(diff / scale < 1e-3, "{}: tensor {ti}: rel err {}", p.variant, diff / scale);
        }
    }
}

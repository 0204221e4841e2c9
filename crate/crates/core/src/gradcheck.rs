//! Central finite-difference checks of every differentiable operation,
//! exposed as a health check.

use rand::Rng as _;

use crate::channel::{apply_filtered_channel, apply_interference_channel, design_precoders_filters, sample_channel, PrecoderOptions};
use crate::diffcore::{MixMaps, Tape, Tensor, Var};
use crate::error::Result;
use crate::rng::{substream, Rng};

/// Finite-difference step.
pub const STEP: f64 = 1e-4;
/// Largest accepted relative error per point.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckResult {
    pub name: &'static str,
    pub points: usize,
    pub max_rel_err: f64,
}

impl GradcheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

struct Case {
    name: &'static str,
    shapes: Vec<Vec<usize>>,
    /// Keep inputs at least this far from zero (for kinks).
    min_abs: f64,
    build: Build,
}

fn random_tensor(shape: &[usize], min_abs: f64, rng: &mut Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(min_abs..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape and length agree")
}

/// `Σ w ⊙ y` as a tape scalar.
fn probe(tape: &mut Tape, y: Var, w: &[f64]) -> Result<Var> {
    let n = w.len();
    if n == 1 && tape.shape(y).iter().product::<usize>() == 1 {
        return Ok(tape.scale(y, w[0]));
    }
    let row = tape.reshape(y, vec![1, n])?;
    let col = tape.constant(Tensor::new(vec![n, 1], w.to_vec())?);
    tape.matmul(row, col)
}

fn eval(case: &Case, inputs: &[Tensor], w: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let y = (case.build)(&mut tape, &vars)?;
    let l = probe(&mut tape, y, w)?;
    Ok(tape.value(l)[0])
}

fn check_point(case: &Case, rng: &mut Rng) -> Result<f64> {
    let inputs: Vec<Tensor> = case.shapes.iter().map(|s| random_tensor(s, case.min_abs, rng)).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let y = (case.build)(&mut tape, &vars)?;
    let w: Vec<f64> = (0..tape.value(y).len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let l = probe(&mut tape, y, &w)?;
    tape.backward(l)?;
    let analytic: Vec<f64> = vars.iter().flat_map(|&v| tape.grad(v).unwrap().to_vec()).collect();

    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..inputs.len() {
        for e in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[e] += STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[e] -= STEP;
            numeric.push((eval(case, &plus, &w)? - eval(case, &minus, &w)?) / (2.0 * STEP));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    Ok(norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12))
}

fn cases(seed: u64) -> Vec<Case> {
    let case = |name, shapes: &[&[usize]], min_abs, build: Build| Case {
        name,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
        min_abs,
        build,
    };
    let mut rng = substream(seed, "gradcheck-fixtures", &[]);
    let channels: Vec<_> = (0..2).map(|_| sample_channel(2, 2, 2, 0.3, &mut rng)).collect();
    let popts = PrecoderOptions {
        streams: 2,
        iterations: 5,
        algorithm: Default::default(),
        power: 1.0,
    };
    let sets: Vec<_> = channels
        .iter()
        .map(|h| design_precoders_filters(h, &popts, &mut rng).expect("2×2 design").set)
        .collect();
    let maps = MixMaps {
        batch: 2,
        inputs: 2,
        rows_out: 3,
        rows_in: 2,
        cols: 2,
        re: (0..24).map(|_| rng.random_range(-1.0..1.0)).collect(),
        im: (0..24).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    let (ch1, ch2) = (channels.clone(), channels);

    vec![
        case("matmul", &[&[4, 3], &[3, 5]], 0.0, Box::new(|t, v| t.matmul(v[0], v[1]))),
        case("affine", &[&[4, 3], &[3, 5], &[5]], 0.0, Box::new(|t, v| t.affine(v[0], v[1], v[2]))),
        case("relu", &[&[4, 6]], 0.05, Box::new(|t, v| Ok(t.relu(v[0])))),
        case("tanh", &[&[4, 6]], 0.0, Box::new(|t, v| Ok(t.tanh(v[0])))),
        case("concat_rows", &[&[3, 2], &[3, 4]], 0.0, Box::new(|t, v| t.concat_rows(v[0], v[1]))),
        case("l2_normalize_scale", &[&[3, 8]], 0.1, Box::new(|t, v| t.l2_normalize_scale(v[0], 2.5))),
        case("mse_loss", &[&[3, 5], &[3, 5]], 0.0, Box::new(|t, v| t.mse_loss(v[0], v[1]))),
        case("sum", &[&[3, 4]], 0.0, Box::new(|t, v| Ok(t.sum(v[0])))),
        case("add", &[&[3, 4], &[3, 4]], 0.0, Box::new(|t, v| t.add(v[0], v[1]))),
        case("scale", &[&[3, 4]], 0.0, Box::new(|t, v| Ok(t.scale(v[0], -0.7)))),
        case("reshape", &[&[3, 4]], 0.0, Box::new(|t, v| t.reshape(v[0], vec![4, 3]))),
        case(
            "mix_complex",
            &[&[2, 8], &[2, 8]],
            0.0,
            Box::new(move |t, v| t.mix_complex(v, maps.clone(), None)),
        ),
        case(
            "interference_channel",
            &[&[2, 12], &[2, 12]],
            0.0,
            Box::new(move |t, v| {
                let ys = apply_interference_channel(t, v, &ch1, 3, &mut substream(seed, "gradcheck-noise", &[]))?;
                t.concat_rows(ys[0], ys[1])
            }),
        ),
        case(
            "filtered_channel",
            &[&[2, 12], &[2, 12]],
            0.0,
            Box::new(move |t, v| {
                let ys = apply_filtered_channel(t, v, &ch2, &sets, 3, &mut substream(seed, "gradcheck-noise", &[]))?;
                t.concat_rows(ys[0], ys[1])
            }),
        ),
    ]
}

/// Runs every check at `points` random inputs.
pub fn run(seed: u64, points: usize) -> Result<Vec<GradcheckResult>> {
    cases(seed)
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let mut rng = substream(seed, "gradcheck", &[i as u64]);
            let mut worst: f64 = 0.0;
            for _ in 0..points {
                worst = worst.max(check_point(case, &mut rng)?);
            }
            Ok(GradcheckResult {
                name: case.name,
                points,
                max_rel_err: worst,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_operations_pass() {
        let results = super::run(1, 10).unwrap();
        assert_eq!(results.len(), 14);
        for r in results {
            assert!(r.passed(), "{}: {:e}", r.name, r.max_rel_err);
        }
    }
}

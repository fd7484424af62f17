//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use divesight::autodiff::{Tape, Var};
use divesight::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_RTOL: f64 = 1e-4;
/// Denominator floor so entries whose true gradient is ~0 are judged on
/// absolute error (`GRAD_RTOL * GRAD_FLOOR`) instead of dividing by ~0.
pub const GRAD_FLOOR: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero (no ReLU kink within a finite-difference step).
pub fn away_from_zero(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Distinct values at least 0.01 apart in random order, so every pooling
/// window has a unique maximum with a wide margin.
pub fn spaced(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.005 * n as f64).collect();
    data.shuffle(rng);
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Worst element-wise error of tape gradients against central differences.
///
/// `build` records a scalar loss from leaves created for `inputs` (in order).
/// Returns `max |g − fd| / max(|g|, |fd|, GRAD_FLOOR)` over every input entry.
pub fn gradcheck(inputs: &[Tensor], build: &dyn Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let eval = |vals: &[Tensor], grads: bool| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone(), grads)).collect();
        let out = build(&mut tape, &vars);
        (tape, vars, out)
    };
    let (tape, vars, out) = eval(inputs, true);
    let grads = tape.backward(out).unwrap();

    let mut worst: f64 = 0.0;
    let mut vals = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let g = grads.get(*var).unwrap().clone();
        for j in 0..vals[i].numel() {
            let orig = vals[i].data()[j];
            vals[i].data_mut()[j] = orig + FD_STEP;
            let (t, _, o) = eval(&vals, false);
            let up = t.value(o).data()[0];
            vals[i].data_mut()[j] = orig - FD_STEP;
            let (t, _, o) = eval(&vals, false);
            let down = t.value(o).data()[0];
            vals[i].data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            let a = g.data()[j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(GRAD_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Contracts a layer output with fixed random weights into a scalar so the
/// check covers every output element's adjoint.
pub fn weighted_sum(tape: &mut Tape, y: Var, weights: &Tensor) -> Var {
    let w = tape.leaf(weights.clone(), false);
    let p = tape.mul(y, w).unwrap();
    tape.sum(p)
}

pub struct LayerCase {
    pub name: &'static str,
    /// Largest relative error seen over all instances.
    pub worst: f64,
    pub instances: usize,
}

/// Runs the finite-difference check for every layer type over `instances`
/// seeded random problems.
pub fn layer_gradchecks(instances: u64) -> Vec<LayerCase> {
    type Case = (&'static str, fn(u64) -> f64);
    let cases: [Case; 8] = [
        ("conv2d", conv_case),
        ("dense", dense_case),
        ("batch-norm-lite", scale_shift_case),
        ("relu", relu_case),
        ("max-pool", max_pool_case),
        ("global-avg-pool", gap_case),
        ("softmax", softmax_case),
        ("softmax+cross-entropy", cross_entropy_case),
    ];
    cases
        .iter()
        .map(|(name, f)| LayerCase {
            name,
            worst: (0..instances).map(|s| f(s)).fold(0.0, f64::max),
            instances: instances as usize,
        })
        .collect()
}

fn conv_case(seed: u64) -> f64 {
    let mut r = rng(100 + seed);
    let stride = 1 + (seed % 2) as usize;
    let padding = ((seed / 2) % 2) as usize;
    let x = uniform(&mut r, &[2, 3, 5, 5], -1.0, 1.0);
    let k = uniform(&mut r, &[4, 3, 3, 3], -1.0, 1.0);
    let oh = (5 + 2 * padding - 3) / stride + 1;
    let w = uniform(&mut r, &[2, 4, oh, oh], -1.0, 1.0);
    gradcheck(&[x, k], &move |t, v| {
        let y = t.conv2d(v[0], v[1], stride, padding).unwrap();
        weighted_sum(t, y, &w)
    })
}

fn dense_case(seed: u64) -> f64 {
    let mut r = rng(200 + seed);
    let x = uniform(&mut r, &[3, 5], -1.0, 1.0);
    let wt = uniform(&mut r, &[4, 5], -1.0, 1.0);
    let b = uniform(&mut r, &[4], -1.0, 1.0);
    let w = uniform(&mut r, &[3, 4], -1.0, 1.0);
    gradcheck(&[x, wt, b], &move |t, v| {
        let y = t.dense(v[0], v[1], v[2]).unwrap();
        weighted_sum(t, y, &w)
    })
}

fn scale_shift_case(seed: u64) -> f64 {
    let mut r = rng(300 + seed);
    let x = uniform(&mut r, &[2, 3, 4, 4], -1.0, 1.0);
    let scale = uniform(&mut r, &[3], 0.5, 1.5);
    let shift = uniform(&mut r, &[3], -0.5, 0.5);
    let w = uniform(&mut r, &[2, 3, 4, 4], -1.0, 1.0);
    gradcheck(&[x, scale, shift], &move |t, v| {
        let y = t.scale_shift(v[0], v[1], v[2]).unwrap();
        weighted_sum(t, y, &w)
    })
}

fn relu_case(seed: u64) -> f64 {
    let mut r = rng(400 + seed);
    let x = away_from_zero(&mut r, &[2, 3, 4, 4]);
    let w = uniform(&mut r, &[2, 3, 4, 4], -1.0, 1.0);
    gradcheck(&[x], &move |t, v| {
        let y = t.relu(v[0]);
        weighted_sum(t, y, &w)
    })
}

fn max_pool_case(seed: u64) -> f64 {
    let mut r = rng(500 + seed);
    let (window, stride) = if seed % 2 == 0 { (2, 2) } else { (3, 1) };
    let x = spaced(&mut r, &[2, 2, 6, 6]);
    let o = (6 - window) / stride + 1;
    let w = uniform(&mut r, &[2, 2, o, o], -1.0, 1.0);
    gradcheck(&[x], &move |t, v| {
        let y = t.max_pool(v[0], window, stride).unwrap();
        weighted_sum(t, y, &w)
    })
}

fn gap_case(seed: u64) -> f64 {
    let mut r = rng(600 + seed);
    let x = uniform(&mut r, &[2, 3, 4, 5], -1.0, 1.0);
    let w = uniform(&mut r, &[2, 3, 1, 1], -1.0, 1.0);
    gradcheck(&[x], &move |t, v| {
        let y = t.global_avg_pool(v[0]).unwrap();
        weighted_sum(t, y, &w)
    })
}

fn softmax_case(seed: u64) -> f64 {
    let mut r = rng(700 + seed);
    let x = uniform(&mut r, &[3, 6], -3.0, 3.0);
    let w = uniform(&mut r, &[3, 6], -1.0, 1.0);
    gradcheck(&[x], &move |t, v| {
        let y = t.softmax(v[0]).unwrap();
        weighted_sum(t, y, &w)
    })
}

fn cross_entropy_case(seed: u64) -> f64 {
    let mut r = rng(800 + seed);
    let x = uniform(&mut r, &[4, 17], -3.0, 3.0);
    let labels: Vec<usize> = (0..4).map(|_| r.gen_range(0..17)).collect();
    gradcheck(&[x], &move |t, v| t.cross_entropy(v[0], &labels).unwrap())
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_divesight")
}

/// Runs the CLI with `args`; stdout/stderr captured.
pub fn run_cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn divesight")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

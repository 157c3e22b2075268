use rand::Rng;
use revrank::explicit::{batch_sauc, sauc_gradient, Calibration, ExplicitRankerParams};
use revrank::implicit::{backward, forward, Activation, MlpRanker, Standardization};
use revrank::{sauc, AuctionRecord, Dataset, ScoredRecord};

use super::{records_defined, rng};

/// Relative difference with a floor that keeps near-zero components from
/// amplifying finite-difference round-off.
pub fn grad_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn step(theta: f64) -> f64 {
    1e-6 * theta.abs().max(1.0)
}

fn random_params(rng: &mut rand_chacha::ChaCha8Rng, batch: &[AuctionRecord]) -> ExplicitRankerParams {
    let ectrs: Vec<f64> = batch.iter().map(|r| r.ectr).collect();
    let cal = Calibration::from_quantiles(&ectrs, 6).unwrap();
    let raw: Vec<f64> = cal
        .knots_raw()
        .iter()
        .map(|r| r + rng.random_range(-0.3..0.3))
        .collect();
    let cal = Calibration::from_raw(cal.knots_x().to_vec(), raw).unwrap();
    ExplicitRankerParams::new(rng.random_range(0.3..2.0), cal).unwrap()
}

pub fn explicit_max_error(seed: u64, temperature: f64) -> f64 {
    let mut rng = rng(seed);
    let batch = records_defined(&mut rng, 50);
    let params = random_params(&mut rng, &batch);
    let g = sauc_gradient(&params, &batch, temperature).unwrap();
    let f = |p: &ExplicitRankerParams| batch_sauc(p, &batch, temperature).unwrap();

    let h = step(params.beta);
    let mut up = params.clone();
    up.beta += h;
    let mut down = params.clone();
    down.beta -= h;
    let mut worst = grad_err(g.beta, (f(&up) - f(&down)) / (2.0 * h));
    for k in 0..params.calibration.len() {
        let raw = params.calibration.knots_raw().to_vec();
        let h = step(raw[k]);
        let shifted = |delta: f64| {
            let mut r = raw.clone();
            r[k] += delta;
            let mut p = params.clone();
            p.calibration.set_raw(r).unwrap();
            p
        };
        let fd = (f(&shifted(h)) - f(&shifted(-h))) / (2.0 * h);
        worst = worst.max(grad_err(g.knots_raw[k], fd));
    }
    worst
}

fn objective(net: &MlpRanker, batch: &[AuctionRecord], t: f64) -> f64 {
    let s: Vec<ScoredRecord> = batch
        .iter()
        .map(|r| ScoredRecord::new(forward(net, r), r.y, r.click))
        .collect();
    -sauc(&s, t).unwrap().value
}

pub fn implicit_max_error(seed: u64, hidden: [usize; 3], activation: Activation) -> f64 {
    let mut rng = rng(seed);
    let batch = records_defined(&mut rng, 30);
    let std = Standardization::fit(&Dataset::from_records(batch.clone()).unwrap());
    let net = MlpRanker::init(hidden, activation, std, seed).unwrap();
    // non-zero biases so every parameter is exercised
    let mut net = net;
    for b in net.params.biases.iter_mut().flatten() {
        *b = rng.random_range(-0.5..0.5);
    }
    let t = 0.5;
    let g = backward(&net, &batch, t).unwrap();
    let mut worst: f64 = 0.0;
    let n = net.params.len();
    for k in 0..n {
        let theta = *net.params.iter().nth(k).unwrap();
        let h = step(theta);
        let perturbed = |delta: f64| {
            let mut m = net.clone();
            *m.params.iter_mut().nth(k).unwrap() += delta;
            m
        };
        let fd = (objective(&perturbed(h), &batch, t) - objective(&perturbed(-h), &batch, t)) / (2.0 * h);
        worst = worst.max(grad_err(*g.iter().nth(k).unwrap(), fd));
    }
    worst
}

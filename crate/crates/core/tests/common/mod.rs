#![allow(dead_code)]

pub mod gradcheck;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revrank::{AuctionRecord, ScoredRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exactly rounded sum (Shewchuk's partials).
pub fn fsum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    partials.iter().sum()
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// Random scored records with click-times-bid labels. `tie_free` draws
/// continuous scores; otherwise scores are rounded to create ties.
pub fn scored(rng: &mut ChaCha8Rng, n: usize, ctr: f64, tie_free: bool) -> Vec<ScoredRecord> {
    (0..n)
        .map(|_| {
            let click = u8::from(rng.random::<f64>() < ctr);
            let bid = rng.random_range(0.1..10.0);
            let raw: f64 = rng.random_range(-3.0..3.0);
            let score = if tie_free { raw } else { (raw * 2.0).round() / 2.0 };
            ScoredRecord::new(score, f64::from(click) * bid, click)
        })
        .collect()
}

/// Like [`scored`] but guarantees both labels appear, so every metric is defined.
pub fn scored_defined(rng: &mut ChaCha8Rng, n: usize, tie_free: bool) -> Vec<ScoredRecord> {
    assert!(n >= 2);
    loop {
        let ctr = rng.random_range(0.05..0.6);
        let recs = scored(rng, n, ctr, tie_free);
        let clicks = recs.iter().filter(|r| r.click == 1).count();
        if clicks > 0 && clicks < n {
            return recs;
        }
    }
}

pub fn records(rng: &mut ChaCha8Rng, n: usize, id: &str) -> Vec<AuctionRecord> {
    (0..n)
        .map(|_| {
            let ectr = rng.random_range(0.005..0.3);
            let bid = rng.random_range(0.2..8.0);
            let click = u8::from(rng.random::<f64>() < 0.3);
            AuctionRecord::new(id, ectr, bid, click).unwrap()
        })
        .collect()
}

/// Records with at least one click and one non-click.
pub fn records_defined(rng: &mut ChaCha8Rng, n: usize) -> Vec<AuctionRecord> {
    loop {
        let r = records(rng, n, "");
        let c = r.iter().filter(|r| r.click == 1).count();
        if c > 0 && c < n {
            return r;
        }
    }
}

// Brute-force pairwise definitions, written directly from the pair sums.

pub fn brute_auc(r: &[ScoredRecord]) -> f64 {
    let mut total = Vec::new();
    let (mut m, mut n) = (0u64, 0u64);
    for p in r.iter().filter(|p| p.click == 1) {
        m += 1;
        for q in r.iter().filter(|q| q.click == 0) {
            total.push(if p.score > q.score {
                1.0
            } else if p.score == q.score {
                0.5
            } else {
                0.0
            });
        }
    }
    n += r.iter().filter(|q| q.click == 0).count() as u64;
    fsum(total) / (m * n) as f64
}

pub fn brute_z(r: &[ScoredRecord]) -> f64 {
    let mut t = Vec::new();
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            t.push((r[i].y - r[j].y).abs());
        }
    }
    fsum(t)
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn brute_auc_r(r: &[ScoredRecord]) -> f64 {
    let mut g = Vec::new();
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            g.push(indicator(r[i].score > r[j].score) * (r[i].y - r[j].y));
            g.push(indicator(r[j].score > r[i].score) * (r[j].y - r[i].y));
        }
    }
    fsum(g) / brute_z(r)
}

pub fn brute_auc_r_asym(r: &[ScoredRecord]) -> f64 {
    let mut g = Vec::new();
    for i in 0..r.len() {
        for j in 0..r.len() {
            if i != j && r[i].score > r[j].score {
                g.push((r[i].y - r[j].y).max(0.0));
            }
        }
    }
    fsum(g) / brute_z(r)
}

/// `2σ(d) − 1` evaluated through `expm1` so it stays accurate near zero.
pub fn centered_logistic(d: f64) -> f64 {
    if d >= 0.0 {
        let e = (-d).exp_m1();
        -e / (2.0 + e)
    } else {
        -centered_logistic(-d)
    }
}

pub fn brute_sauc(r: &[ScoredRecord], t: f64) -> f64 {
    let mut g = Vec::new();
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            g.push(centered_logistic((r[i].score - r[j].score) / t) * (r[i].y - r[j].y));
        }
    }
    fsum(g) / brute_z(r)
}

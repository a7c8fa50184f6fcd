//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use reveal_core::align::{batch_loss, loss_and_grad, AlignmentModel, LossKind, ProjectionHead};
use reveal_core::gacl::{Combiner, LabelMatrix};

pub fn normal(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, k), || rng.sample::<f64, _>(StandardNormal))
}

pub struct Instance {
    pub model: AlignmentModel,
    pub x_img: Array2<f64>,
    pub x_txt: Array2<f64>,
    pub labels: LabelMatrix,
}

fn scaled_normal(rng: &mut ChaCha8Rng, shape: (usize, usize), scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.sample::<f64, _>(StandardNormal) * scale)
}

pub fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8);
    let d_img = rng.random_range(2..=16);
    let d_txt = rng.random_range(2..=16);
    let p = rng.random_range(2..=8);
    let mut image_head = ProjectionHead::random(d_img, p, &mut rng);
    let mut text_head = ProjectionHead::random(d_txt, p, &mut rng);
    image_head.bias = scaled_normal(&mut rng, (1, p), 0.3).into_shape_with_order(p).unwrap();
    text_head.bias = scaled_normal(&mut rng, (1, p), 0.3).into_shape_with_order(p).unwrap();
    let labels = LabelMatrix(Array2::from_shape_fn((n, n), |(i, j)| {
        if i == j || rng.random_bool(0.3) {
            1
        } else {
            -1
        }
    }));
    Instance {
        model: AlignmentModel {
            image_head,
            text_head,
            temperature: 0.07,
            beta: rng.random_range(-2.0..0.0),
        },
        x_img: scaled_normal(&mut rng, (n, d_img), 1.0),
        x_txt: scaled_normal(&mut rng, (n, d_txt), 1.0),
        labels,
    }
}

fn loss_at(inst: &Instance, kind: LossKind, flat: &[f64]) -> f64 {
    let mut m = inst.model.clone();
    m.set_flat(flat);
    batch_loss(&m, inst.x_img.view(), inst.x_txt.view(), kind, Some(&inst.labels)).unwrap()
}

/// Largest per-parameter relative error, with gradients below `floor` in
/// both estimates compared absolutely.
pub fn max_relative_error(inst: &Instance, kind: LossKind) -> f64 {
    let h = 1e-5;
    let floor = 1e-6;
    let (_, g) = loss_and_grad(
        &inst.model,
        inst.x_img.view(),
        inst.x_txt.view(),
        kind,
        Some(&inst.labels),
    )
    .unwrap();
    let analytic = g.to_flat();
    let theta = inst.model.to_flat();
    let mut worst: f64 = 0.0;
    for k in 0..theta.len() {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[k] += h;
        minus[k] -= h;
        let numeric = (loss_at(inst, kind, &plus) - loss_at(inst, kind, &minus)) / (2.0 * h);
        let denom = analytic[k].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}

/// Independent scalar-loop version of z-score, cosine, threshold and combine.
pub fn brute_force(f: &Array2<f64>, t: &Array2<f64>, tau_f: f64, tau_t: f64, combiner: Combiner) -> Vec<Vec<i8>> {
    let (n, k) = f.dim();
    let mut z = vec![vec![0.0; k]; n];
    for j in 0..k {
        let mut mean = 0.0;
        for i in 0..n {
            mean += f[[i, j]];
        }
        mean /= n as f64;
        let mut ss = 0.0;
        for i in 0..n {
            ss += (f[[i, j]] - mean) * (f[[i, j]] - mean);
        }
        let sd = (ss / (n - 1) as f64).sqrt();
        for i in 0..n {
            z[i][j] = (f[[i, j]] - mean) / sd;
        }
    }
    let cosine = |a: &[f64], b: &[f64]| {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for q in 0..a.len() {
            dot += a[q] * b[q];
            na += a[q] * a[q];
            nb += b[q] * b[q];
        }
        dot / (na.sqrt() * nb.sqrt())
    };
    let t_rows: Vec<Vec<f64>> = t.rows().into_iter().map(|r| r.to_vec()).collect();
    let mut out = vec![vec![0i8; n]; n];
    for i in 0..n {
        for j in 0..n {
            let positive = if i == j {
                true
            } else {
                let a = cosine(&z[i], &z[j]) > tau_f;
                let b = cosine(&t_rows[i], &t_rows[j]) > tau_t;
                match combiner {
                    Combiner::Or => a || b,
                    Combiner::And => a && b,
                }
            };
            out[i][j] = if positive { 1 } else { -1 };
        }
    }
    out
}

/// Fraction of (case, control) pairs ordered correctly, ties counted half.
pub fn pair_count(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

pub fn blobs(rng: &mut ChaCha8Rng, n_pos: usize, n_neg: usize, gap: f64, spread: f64) -> (Array2<f64>, Vec<bool>) {
    let n = n_pos + n_neg;
    let labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    let x = Array2::from_shape_fn((n, 2), |(i, _)| {
        let centre = if labels[i] { gap / 2.0 } else { -gap / 2.0 };
        centre + spread * rng.sample::<f64, _>(StandardNormal)
    });
    (x, labels)
}

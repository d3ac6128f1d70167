//! Gated multimodal unit joining the two encoders.
//!
//! ```text
//! L_h = tanh(W_L · L_feats + b_L)
//! A_h = tanh(W_A · A_feats + b_A)
//! z   = σ(W_z · [A_feats; L_feats] + b_z)
//! h   = z ⊙ A_h + (1 − z) ⊙ L_h
//! ```

use crate::error::{Error, Result};
use crate::numerics::{
    gemv_acc, gemv_t_acc, init_uniform, outer_acc, sigmoid, Parameterized, RngStream, Scalar,
    Tensor,
};

#[derive(Clone, Debug, PartialEq)]
pub struct GmuParams<F> {
    pub w_l: Tensor<F>,
    pub b_l: Tensor<F>,
    pub w_a: Tensor<F>,
    pub b_a: Tensor<F>,
    /// Columns ordered `[A_feats; L_feats]`.
    pub w_z: Tensor<F>,
    pub b_z: Tensor<F>,
}

/// Every intermediate of one fusion, kept for inspection and backward.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPair<F> {
    pub l_feats: Vec<F>,
    pub a_feats: Vec<F>,
    pub l_h: Vec<F>,
    pub a_h: Vec<F>,
    pub z: Vec<F>,
    pub h: Vec<F>,
}

impl<F: Scalar> GmuParams<F> {
    /// `hidden` output units over two `2·hidden` feature vectors.
    pub fn zeros(hidden: usize) -> Self {
        GmuParams {
            w_l: Tensor::zeros(&[hidden, 2 * hidden]),
            b_l: Tensor::zeros(&[hidden]),
            w_a: Tensor::zeros(&[hidden, 2 * hidden]),
            b_a: Tensor::zeros(&[hidden]),
            w_z: Tensor::zeros(&[hidden, 4 * hidden]),
            b_z: Tensor::zeros(&[hidden]),
        }
    }

    pub fn init(rng: &mut RngStream, hidden: usize) -> Self {
        GmuParams {
            w_l: init_uniform(rng, 2 * hidden, hidden),
            b_l: Tensor::zeros(&[hidden]),
            w_a: init_uniform(rng, 2 * hidden, hidden),
            b_a: Tensor::zeros(&[hidden]),
            w_z: init_uniform(rng, 4 * hidden, hidden),
            b_z: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_z.len()
    }
}

pub fn gmu_fuse<F: Scalar>(p: &GmuParams<F>, l_feats: &[F], a_feats: &[F]) -> Result<LatentPair<F>> {
    let width = p.w_l.cols();
    if l_feats.len() != width || a_feats.len() != width {
        return Err(Error::shape(
            "gmu_fuse features",
            width,
            format!("L {} / A {}", l_feats.len(), a_feats.len()),
        ));
    }
    let mut l_h = p.b_l.data().to_vec();
    gemv_acc(&p.w_l, l_feats, &mut l_h);
    l_h.iter_mut().for_each(|v| *v = v.tanh());

    let mut a_h = p.b_a.data().to_vec();
    gemv_acc(&p.w_a, a_feats, &mut a_h);
    a_h.iter_mut().for_each(|v| *v = v.tanh());

    let mut cat = a_feats.to_vec();
    cat.extend_from_slice(l_feats);
    let mut z = p.b_z.data().to_vec();
    gemv_acc(&p.w_z, &cat, &mut z);
    z.iter_mut().for_each(|v| *v = sigmoid(*v));

    let h = z
        .iter()
        .zip(a_h.iter().zip(&l_h))
        .map(|(&zk, (&a, &l))| zk * a + (F::one() - zk) * l)
        .collect();
    Ok(LatentPair {
        l_feats: l_feats.to_vec(),
        a_feats: a_feats.to_vec(),
        l_h,
        a_h,
        z,
        h,
    })
}

/// Gradients on the two feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrads<F> {
    pub d_l_feats: Vec<F>,
    pub d_a_feats: Vec<F>,
}

pub fn gmu_backward<F: Scalar>(
    p: &GmuParams<F>,
    cache: &LatentPair<F>,
    dh: &[F],
    grads: &mut GmuParams<F>,
) -> Result<FeatureGrads<F>> {
    let hidden = p.hidden();
    if dh.len() != hidden || cache.z.len() != hidden || cache.l_feats.len() != p.w_l.cols() {
        return Err(Error::shape("gmu_backward", hidden, dh.len()));
    }
    let one = F::one();
    let mut d_z = vec![F::zero(); hidden];
    let mut d_lpre = vec![F::zero(); hidden];
    let mut d_apre = vec![F::zero(); hidden];
    for k in 0..hidden {
        let (z, a, l) = (cache.z[k], cache.a_h[k], cache.l_h[k]);
        d_z[k] = dh[k] * (a - l) * z * (one - z);
        d_apre[k] = dh[k] * z * (one - a * a);
        d_lpre[k] = dh[k] * (one - z) * (one - l * l);
    }
    let width = p.w_l.cols();

    outer_acc(&mut grads.w_l, &d_lpre, &cache.l_feats);
    outer_acc(&mut grads.w_a, &d_apre, &cache.a_feats);
    let mut cat = cache.a_feats.clone();
    cat.extend_from_slice(&cache.l_feats);
    outer_acc(&mut grads.w_z, &d_z, &cat);
    for (g, d) in grads.b_l.data_mut().iter_mut().zip(&d_lpre) {
        *g += *d;
    }
    for (g, d) in grads.b_a.data_mut().iter_mut().zip(&d_apre) {
        *g += *d;
    }
    for (g, d) in grads.b_z.data_mut().iter_mut().zip(&d_z) {
        *g += *d;
    }

    let mut d_cat = vec![F::zero(); 2 * width];
    gemv_t_acc(&p.w_z, &d_z, &mut d_cat);
    let mut d_a_feats = d_cat[..width].to_vec();
    let mut d_l_feats = d_cat[width..].to_vec();
    gemv_t_acc(&p.w_a, &d_apre, &mut d_a_feats);
    gemv_t_acc(&p.w_l, &d_lpre, &mut d_l_feats);
    Ok(FeatureGrads {
        d_l_feats,
        d_a_feats,
    })
}

impl<F: Scalar> Parameterized<F> for GmuParams<F> {
    fn params(&self) -> Vec<(String, &Tensor<F>)> {
        vec![
            ("w_l".into(), &self.w_l),
            ("b_l".into(), &self.b_l),
            ("w_a".into(), &self.w_a),
            ("b_a".into(), &self.b_a),
            ("w_z".into(), &self.w_z),
            ("b_z".into(), &self.b_z),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<F>> {
        vec![
            &mut self.w_l,
            &mut self.b_l,
            &mut self.w_a,
            &mut self.b_a,
            &mut self.w_z,
            &mut self.b_z,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::tests::randomize;
    use crate::numerics::{grad_check, relative_error};

    fn random_vec(rng: &mut RngStream, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()
    }

    #[test]
    fn zero_gate_weights_average_the_branches() {
        let mut rng = RngStream::new(1);
        let mut p = GmuParams::<f64>::init(&mut rng, 50);
        p.w_z.fill_zero();
        let (l, a) = (random_vec(&mut rng, 100), random_vec(&mut rng, 100));
        let lp = gmu_fuse(&p, &l, &a).unwrap();
        assert!(lp.z.iter().all(|&z| z == 0.5));
        for k in 0..50 {
            assert!((lp.h[k] - 0.5 * (lp.a_h[k] + lp.l_h[k])).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_gate_selects_action_branch() {
        // σ(50) = 1 − 1.9e-22, so |h − A_h| ≤ 2e-22 · |A_h − L_h|
        let mut rng = RngStream::new(2);
        let mut p = GmuParams::<f64>::init(&mut rng, 50);
        p.w_z.fill_zero();
        p.b_z.data_mut().iter_mut().for_each(|b| *b = 50.0);
        let (l, a) = (random_vec(&mut rng, 100), random_vec(&mut rng, 100));
        let lp = gmu_fuse(&p, &l, &a).unwrap();
        for k in 0..50 {
            assert!((lp.h[k] - lp.a_h[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn shapes_are_checked() {
        let p = GmuParams::<f64>::zeros(50);
        assert_eq!(p.w_l.dims(), &[50, 100]);
        assert_eq!(p.w_z.dims(), &[50, 200]);
        assert!(gmu_fuse(&p, &[0.0; 99], &[0.0; 100]).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = RngStream::new(3);
        let p = GmuParams::<f64>::init(&mut rng, 6);
        let lp = gmu_fuse(&p, &random_vec(&mut rng, 12), &random_vec(&mut rng, 12)).unwrap();
        let mut g = GmuParams::zeros(6);
        let fg = gmu_backward(&p, &lp, &[0.0; 6], &mut g).unwrap();
        assert!(g.params().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
        assert!(fg.d_l_feats.iter().chain(&fg.d_a_feats).all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences_at_full_width() {
        let mut rng = RngStream::new(4);
        let mut p = GmuParams::<f64>::zeros(50);
        randomize(&mut p, &mut rng, 0.1);
        let (l, a) = (random_vec(&mut rng, 100), random_vec(&mut rng, 100));
        let proj = random_vec(&mut rng, 50);
        let loss = |p: &GmuParams<f64>, l: &[f64], a: &[f64]| {
            let lp = gmu_fuse(p, l, a).unwrap();
            lp.h.iter().zip(&proj).map(|(x, y)| x * y).sum::<f64>()
        };
        let lp = gmu_fuse(&p, &l, &a).unwrap();
        let mut g = GmuParams::zeros(50);
        let fg = gmu_backward(&p, &lp, &proj, &mut g).unwrap();

        for k in 0..100 {
            let mut lp_ = l.clone();
            lp_[k] += 1e-5;
            let mut lm = l.clone();
            lm[k] -= 1e-5;
            let num = (loss(&p, &lp_, &a) - loss(&p, &lm, &a)) / 2e-5;
            assert!(relative_error(fg.d_l_feats[k], num) < 1e-6);
            let mut ap = a.clone();
            ap[k] += 1e-5;
            let mut am = a.clone();
            am[k] -= 1e-5;
            let num = (loss(&p, &l, &ap) - loss(&p, &l, &am)) / 2e-5;
            assert!(relative_error(fg.d_a_feats[k], num) < 1e-6);
        }
        let rep = grad_check(&mut p, &g, |m| Ok(loss(m, &l, &a)), 500, 1e-5, &mut rng).unwrap();
        assert!(rep.max_rel_error < 1e-6, "{rep:?}");
    }

    #[test]
    fn both_modalities_receive_gradient() {
        let mut rng = RngStream::new(5);
        let p = GmuParams::<f64>::init(&mut rng, 8);
        let lp = gmu_fuse(&p, &random_vec(&mut rng, 16), &random_vec(&mut rng, 16)).unwrap();
        let mut g = GmuParams::zeros(8);
        let fg = gmu_backward(&p, &lp, &random_vec(&mut rng, 8), &mut g).unwrap();
        assert!(fg.d_l_feats.iter().any(|v| v.abs() > 1e-6));
        assert!(fg.d_a_feats.iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn swapping_modalities_with_swapped_weights_reproduces_h() {
        let mut rng = RngStream::new(6);
        for _ in 0..50 {
            let hidden = 5;
            let mut p = GmuParams::<f64>::zeros(hidden);
            randomize(&mut p, &mut rng, 1.0);
            let (l, a) = (random_vec(&mut rng, 10), random_vec(&mut rng, 10));
            let base = gmu_fuse(&p, &l, &a).unwrap();

            // Feed (A as language, L as action). With W_L↔W_A swapped, the gate's
            // input columns swapped halves, and the gate negated (1 − σ(x) = σ(−x)),
            // the output must be unchanged.
            let mut q = p.clone();
            q.w_l = p.w_a.clone();
            q.b_l = p.b_a.clone();
            q.w_a = p.w_l.clone();
            q.b_a = p.b_l.clone();
            let w = 2 * hidden;
            for r in 0..hidden {
                for c in 0..w {
                    q.w_z.data_mut()[r * 2 * w + c] = -p.w_z.data()[r * 2 * w + w + c];
                    q.w_z.data_mut()[r * 2 * w + w + c] = -p.w_z.data()[r * 2 * w + c];
                }
                q.b_z.data_mut()[r] = -p.b_z.data()[r];
            }
            let swapped = gmu_fuse(&q, &a, &l).unwrap();
            for k in 0..hidden {
                assert!((base.h[k] - swapped.h[k]).abs() < 1e-12);
                assert!((base.z[k] - (1.0 - swapped.z[k])).abs() < 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn gate_open_and_h_between_branches(seed in any::<u64>(), scale in 0.01f64..5.0) {
                let mut rng = RngStream::new(seed);
                let mut p = GmuParams::<f64>::zeros(7);
                randomize(&mut p, &mut rng, scale);
                let l: Vec<f64> = (0..14).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let a: Vec<f64> = (0..14).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let lp = gmu_fuse(&p, &l, &a).unwrap();
                for k in 0..7 {
                    prop_assert!(lp.z[k] > 0.0 && lp.z[k] < 1.0);
                    let lo = lp.a_h[k].min(lp.l_h[k]);
                    let hi = lp.a_h[k].max(lp.l_h[k]);
                    prop_assert!(lp.h[k] >= lo - 1e-12 && lp.h[k] <= hi + 1e-12);
                }
                prop_assert_eq!(gmu_fuse(&p, &l, &a).unwrap(), lp);
            }
        }
    }
}

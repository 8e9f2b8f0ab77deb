use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::fixtures::{sized_state, stub_state};
use super::*;
use crate::autodiff::finite_diff_check;
use crate::dataio::{Edge, LabeledEdges};
use crate::error::Error;
use crate::numkit::{gaussian_logpdf, lu_factor, normal_matrix, sigmoid, softplus_inv, Matrix, Rng};

fn names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("g{i}")).collect()
}

fn a12(p: usize, v: f64) -> Matrix {
    let mut a = Matrix::zeros(p, p);
    a[(0, 1)] = v;
    a
}

#[test]
fn mixing_matrix_examples() {
    assert_eq!(mixing_matrix(&Matrix::zeros(3, 3)).unwrap(), Matrix::identity(3));
    let m = mixing_matrix(&a12(2, 0.5)).unwrap();
    assert_eq!(m, Matrix::from_rows(&[vec![1.0, 0.0], vec![-0.5, 1.0]]));
    assert!(mixing_matrix(&Matrix::zeros(2, 3)).is_err());
}

#[test]
fn mixing_matrix_invertible_below_unit_spectral_radius() {
    // Sparse A scaled so its largest absolute row sum is 0.95 < 1, which
    // bounds the spectral radius.
    for seed in 0..50 {
        let mut rng = Rng::seed_from_u64(seed);
        let p = 12;
        let mut a = Matrix::zeros(p, p);
        for i in 0..p {
            for k in 0..p {
                if i != k && rng.bernoulli(0.2) {
                    a[(i, k)] = rng.normal();
                }
            }
        }
        let norm = (0..p)
            .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        if norm > 0.0 {
            a = a.scale(0.95 / norm);
        }
        assert!(lu_factor(&mixing_matrix(&a).unwrap()).is_ok());
    }
}

#[test]
fn encode_constant_and_positive() {
    let x = normal_matrix(&mut Rng::seed_from_u64(1), 3, 4, 5.0);
    let (mu, std) = encode(&x, &MlpParams::constant(0.25, 0.5)).unwrap();
    assert!(mu.as_slice().iter().all(|&v| v == 0.25));
    assert!(std.as_slice().iter().all(|&v| (v - 0.5).abs() < 1e-12));
    for seed in 0..20 {
        let mut rng = Rng::seed_from_u64(seed);
        let net = MlpParams::random(&[16], &mut rng);
        let x = normal_matrix(&mut rng, 5, 6, 3.0);
        let (_, std) = encode(&x, &net).unwrap();
        assert!(std.as_slice().iter().all(|&v| v > 0.0));
    }
}

#[test]
fn encode_and_decode_are_entrywise() {
    let mut rng = Rng::seed_from_u64(2);
    let net = MlpParams::random(&[16], &mut rng);
    let x = normal_matrix(&mut rng, 4, 5, 1.0);
    let (mu, std) = encode(&x, &net).unwrap();
    let (mean, var) = decode(&x, &net).unwrap();
    let mut shuffled = x.clone();
    let mut other: Vec<f64> = shuffled.as_slice().to_vec();
    rng.shuffle(&mut other);
    shuffled.as_mut_slice().copy_from_slice(&other);
    shuffled[(1, 2)] = x[(1, 2)];
    let (mu2, std2) = encode(&shuffled, &net).unwrap();
    let (mean2, var2) = decode(&shuffled, &net).unwrap();
    assert_eq!(mu[(1, 2)], mu2[(1, 2)]);
    assert_eq!(std[(1, 2)], std2[(1, 2)]);
    assert_eq!(mean[(1, 2)], mean2[(1, 2)]);
    assert_eq!(var[(1, 2)], var2[(1, 2)]);
}

#[test]
fn reparam_sample_examples() {
    let mu = Matrix::filled(3, 3, 3.0);
    let std = Matrix::filled(3, 3, SCALE_FLOOR);
    let (z, eps) = reparam_sample(&mu, &std, &mut Rng::seed_from_u64(0)).unwrap();
    assert!(z.as_slice().iter().all(|&v| (v - 3.0).abs() < 1e-4));
    assert_eq!(eps.shape(), (3, 3));
    let a = reparam_sample(&mu, &Matrix::ones(3, 3), &mut Rng::seed_from_u64(4)).unwrap();
    let b = reparam_sample(&mu, &Matrix::ones(3, 3), &mut Rng::seed_from_u64(4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn reparam_sample_moments() {
    let n = 100_000;
    let mu = Matrix::from_vec(1, n, vec![1.5; n]).unwrap();
    let std = Matrix::from_vec(1, n, vec![0.7; n]).unwrap();
    let (z, _) = reparam_sample(&mu, &std, &mut Rng::seed_from_u64(9)).unwrap();
    let mean = z.sum() / n as f64;
    let var = z.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se_mean = 0.7 / (n as f64).sqrt();
    // Var of the sample variance of a Gaussian is 2σ⁴/(n−1).
    let se_var = (2.0 * 0.7f64.powi(4) / (n - 1) as f64).sqrt();
    assert!((mean - 1.5).abs() < 3.0 * se_mean, "mean {mean}");
    assert!((var - 0.49).abs() < 3.0 * se_var, "var {var}");
}

#[test]
fn latent_noise_examples() {
    let z_hat = Matrix::from_rows(&[vec![1.0], vec![1.0]]);
    assert_eq!(latent_noise(&z_hat, &Matrix::zeros(2, 2)).unwrap(), z_hat);
    let z = latent_noise(&z_hat, &a12(2, 0.5)).unwrap();
    assert_eq!(z, Matrix::from_rows(&[vec![1.0], vec![0.5]]));
    let mut rng = Rng::seed_from_u64(3);
    let mut a = normal_matrix(&mut rng, 5, 5, 0.2);
    a.zero_diagonal();
    let z_hat = normal_matrix(&mut rng, 5, 7, 1.0);
    let z = latent_noise(&z_hat, &a).unwrap();
    let back = lu_factor(&mixing_matrix(&a).unwrap()).unwrap().solve(&z).unwrap();
    assert!(back.sub(&z_hat).unwrap().max_abs() < 1e-9);
}

#[test]
fn reconstruction_examples() {
    let x = Matrix::zeros(2, 1);
    let r = reconstruction_term(&x, &Matrix::zeros(2, 1), &MlpParams::constant(0.0, 1.0)).unwrap();
    assert_abs_diff_eq!(r, -(2.0 * PI).ln(), epsilon = 1e-9);
    assert_abs_diff_eq!(r, -1.837877, epsilon = 1e-6);

    // Linear decoder with mean = input and fixed variance v.
    let v = 0.3;
    let mut dec = MlpParams::constant(0.0, v);
    dec.mean_head.weight = Matrix::scalar(1.0);
    let x = normal_matrix(&mut Rng::seed_from_u64(5), 3, 4, 1.0);
    let r = reconstruction_term(&x, &x, &dec).unwrap();
    assert_abs_diff_eq!(r, -(12.0 / 2.0) * (2.0 * PI * v).ln(), epsilon = 1e-9);
}

#[test]
fn reconstruction_matches_direct_sum() {
    let mut rng = Rng::seed_from_u64(6);
    let dec = MlpParams::random(&[4], &mut rng);
    let x = normal_matrix(&mut rng, 3, 5, 1.0);
    let z = normal_matrix(&mut rng, 3, 5, 1.0);
    // Independent evaluation of the network, one scalar at a time.
    let mut expect = 0.0;
    for (&xi, &zi) in x.as_slice().iter().zip(z.as_slice()) {
        let h: Vec<f64> = (0..4)
            .map(|u| (zi * dec.hidden[0].weight[(0, u)] + dec.hidden[0].bias[(0, u)]).tanh())
            .collect();
        let head = |d: &Dense| h.iter().enumerate().map(|(u, hv)| hv * d.weight[(u, 0)]).sum::<f64>() + d.bias[(0, 0)];
        let mean = head(&dec.mean_head);
        let var = crate::numkit::softplus(head(&dec.scale_head)) + SCALE_FLOOR;
        expect += -0.5 * (2.0 * PI * var).ln() - (xi - mean).powi(2) / (2.0 * var);
    }
    let got = reconstruction_term(&x, &z, &dec).unwrap();
    assert_abs_diff_eq!(got, expect, epsilon = 1e-10);
}

#[test]
fn kl_examples() {
    let zero = kl_term(&Matrix::zeros(3, 2), &Matrix::ones(3, 2), &Matrix::zeros(3, 3), 1.0).unwrap();
    assert_abs_diff_eq!(zero, 0.0, epsilon = 1e-15);
    let sz = 0.4;
    let zero = kl_term(&Matrix::zeros(2, 2), &Matrix::filled(2, 2, sz), &Matrix::zeros(2, 2), sz).unwrap();
    assert_abs_diff_eq!(zero, 0.0, epsilon = 1e-14);
    let one = kl_term(&Matrix::scalar(1.0), &Matrix::scalar(1.0), &Matrix::zeros(1, 1), 1.0).unwrap();
    assert_abs_diff_eq!(one, 0.5, epsilon = 1e-15);
    let k = kl_term(&Matrix::zeros(2, 1), &Matrix::ones(2, 1), &a12(2, 0.5), 1.0).unwrap();
    assert_abs_diff_eq!(k, 0.125, epsilon = 1e-15);
    let singular = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
    assert!(matches!(
        kl_term(&Matrix::zeros(2, 1), &Matrix::ones(2, 1), &singular, 1.0),
        Err(Error::SingularMatrix { .. })
    ));
}

fn random_posterior(seed: u64, p: usize, n: usize) -> (Matrix, Matrix, Matrix, f64) {
    let mut rng = Rng::seed_from_u64(seed);
    let mu = normal_matrix(&mut rng, p, n, 1.0);
    let std = normal_matrix(&mut rng, p, n, 1.0).map(|v| 0.2 + v.abs());
    let mut a = normal_matrix(&mut rng, p, p, 0.3);
    a.zero_diagonal();
    let sigma_z = 0.5 + rng.uniform();
    (mu, std, a, sigma_z)
}

#[test]
fn kl_matches_monte_carlo() {
    for seed in 0..5 {
        let p = 2 + seed as usize % 4;
        let (mu, std, a, sz) = random_posterior(100 + seed, p, 2);
        let exact = kl_term(&mu, &std, &a, sz).unwrap();
        let mc = kl_monte_carlo(&mu, &std, &a, sz, 100_000, &mut Rng::seed_from_u64(seed)).unwrap();
        assert!(
            (exact - mc.mean).abs() < 3.0 * mc.std_error,
            "seed {seed}: exact {exact}, mc {} ± {}",
            mc.mean,
            mc.std_error
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn kl_is_nonnegative(seed in any::<u64>(), p in 1usize..6, n in 1usize..4) {
        let (mu, std, a, sz) = random_posterior(seed, p, n);
        prop_assert!(kl_term(&mu, &std, &a, sz).unwrap() >= -1e-9);
    }
}

#[test]
fn adjacency_prior_examples() {
    assert_eq!(adjacency_prior_deepsem(&Matrix::zeros(2, 2), 0.5).unwrap(), 0.0);
    assert_abs_diff_eq!(
        adjacency_prior_deepsem(&Matrix::zeros(2, 2), 1.0).unwrap(),
        -2.0 * 2f64.ln(),
        epsilon = 1e-15
    );
    assert_abs_diff_eq!(
        adjacency_prior_deepsem(&a12(2, 1.0), 1.0).unwrap(),
        -2.0 * 2f64.ln() - 1.0,
        epsilon = 1e-15
    );
}

#[test]
fn embedding_mean_examples() {
    let ep = EmbeddingPrior {
        h: Matrix::from_rows(&[vec![1.0], vec![2.0]]),
        w: Matrix::from_rows(&[vec![3.0, 4.0]]),
    };
    let m = embedding_prior_mean(&ep).unwrap();
    assert_eq!(m[(0, 1)], 11.0);
    assert_eq!(m[(1, 0)], 2.0 * 3.0 + 1.0 * 4.0);
    assert_ne!(m[(0, 1)], m[(1, 0)]);
    assert_eq!(m[(0, 0)], 0.0);
    let zero = embedding_prior_mean(&EmbeddingPrior::new(Matrix::ones(3, 2))).unwrap();
    assert_eq!(zero, Matrix::zeros(3, 3));
    let bad = EmbeddingPrior {
        h: Matrix::ones(2, 2),
        w: Matrix::ones(1, 3),
    };
    assert!(matches!(embedding_prior_mean(&bad), Err(Error::DimensionMismatch(_))));
}

#[test]
fn infosem_b_prior_examples() {
    let mut rng = Rng::seed_from_u64(12);
    let mut a = normal_matrix(&mut rng, 4, 4, 1.0);
    a.zero_diagonal();
    let ep0 = EmbeddingPrior::new(normal_matrix(&mut rng, 4, 2, 1.0));
    assert_eq!(
        adjacency_prior_infosem_b(&a, &ep0, 0.7).unwrap(),
        adjacency_prior_deepsem(&a, 0.7).unwrap()
    );
    let ep = EmbeddingPrior {
        h: ep0.h.clone(),
        w: normal_matrix(&mut rng, 1, 4, 1.0),
    };
    let at_mode = embedding_prior_mean(&ep).unwrap();
    assert_abs_diff_eq!(
        adjacency_prior_infosem_b(&at_mode, &ep, 0.7).unwrap(),
        -12.0 * (1.4f64).ln(),
        epsilon = 1e-12
    );
    let m = embedding_prior_mean(&ep).unwrap();
    let mut expect = 0.0;
    for i in 0..4 {
        for k in 0..4 {
            if i != k {
                expect += -(1.4f64).ln() - (a[(i, k)] - m[(i, k)]).abs() / 0.7;
            }
        }
    }
    assert_abs_diff_eq!(adjacency_prior_infosem_b(&a, &ep, 0.7).unwrap(), expect, epsilon = 1e-12);
}

#[test]
fn weight_prior_examples() {
    assert_abs_diff_eq!(weight_prior(&Matrix::zeros(1, 2), 1.0).unwrap(), -(2.0 * PI).ln(), epsilon = 1e-15);
    let w = Matrix::from_rows(&[vec![0.3, -1.2, 2.0]]);
    let expect: f64 = w.as_slice().iter().map(|&v| gaussian_logpdf(v, 0.0, 2.5).unwrap()).sum();
    assert_abs_diff_eq!(weight_prior(&w, 2.5).unwrap(), expect, epsilon = 1e-15);
}

#[test]
fn weight_prior_gradient_vanishes_for_wide_prior() {
    let mut st = sized_state(Variant::InfoSemB, 3, 4, 2, 1);
    st.prior.sigma_w = 1e8;
    let pv = st.params();
    let x = normal_matrix(&mut Rng::seed_from_u64(1), 4, 3, 1.0);
    let wide = ElboObjective::sampled(&st, x.clone(), 1, 1.0, None, &mut Rng::seed_from_u64(2)).unwrap();
    st.prior.sigma_w = 1e9;
    let wider = ElboObjective::sampled(&st, x, 1, 1.0, None, &mut Rng::seed_from_u64(2)).unwrap();
    let (_, g1) = wide.value_and_gradient(&pv).unwrap();
    let (_, g2) = wider.value_and_gradient(&pv).unwrap();
    let w1 = g1.get("w").unwrap();
    let w2 = g2.get("w").unwrap();
    assert!(w1.sub(&w2).unwrap().max_abs() < 1e-12);
}

#[test]
fn compose_examples() {
    let mut rng = Rng::seed_from_u64(4);
    let mut e = normal_matrix(&mut rng, 3, 3, 1.0);
    e.zero_diagonal();
    let zero_logits = LowRankLogits {
        a: Matrix::zeros(3, 2),
        b: Matrix::zeros(2, 3),
    };
    assert_eq!(compose_adjacency(&e, &zero_logits).unwrap(), e.scale(0.5));
    let logits = LowRankLogits {
        a: normal_matrix(&mut rng, 3, 2, 2.0),
        b: normal_matrix(&mut rng, 2, 3, 2.0),
    };
    assert_eq!(compose_adjacency(&Matrix::zeros(3, 3), &logits).unwrap(), Matrix::zeros(3, 3));
    let a = compose_adjacency(&e, &logits).unwrap();
    for (x, y) in a.as_slice().iter().zip(e.as_slice()) {
        assert!(x.abs() <= y.abs());
    }
    for i in 0..3 {
        assert_eq!(a[(i, i)], 0.0);
    }
}

#[test]
fn label_prior_examples() {
    let logits = LowRankLogits {
        a: Matrix::from_rows(&[vec![19f64.ln()], vec![0.0]]),
        b: Matrix::from_rows(&[vec![0.0, 1.0]]),
    };
    let none = LabeledEdges::empty(names(2));
    assert_eq!(label_prior(&logits, &none, 0.1).unwrap(), 0.0);
    let one = LabeledEdges::new(names(2), vec![Edge::new(0, 1, true)]).unwrap();
    let v = label_prior(&logits, &one, 0.1).unwrap();
    assert_abs_diff_eq!(v, -0.5 * (2.0 * PI * 0.01).ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(v, 1.38364, epsilon = 1e-5);
    let at_zero = LowRankLogits {
        a: Matrix::zeros(2, 1),
        b: Matrix::zeros(1, 2),
    };
    let v = label_prior(&at_zero, &one, 0.1).unwrap();
    assert_abs_diff_eq!(v, 1.38364 - 19f64.ln().powi(2) / 0.02, epsilon = 1e-4);
    assert!((v - -432.10).abs() < 0.01);
    let neg = LabeledEdges::new(names(2), vec![Edge::new(1, 0, false)]).unwrap();
    let v = label_prior(&logits, &neg, 0.1).unwrap();
    assert_abs_diff_eq!(v, gaussian_logpdf(0.0, -(19f64.ln()), 0.1).unwrap(), epsilon = 1e-12);
}

#[test]
fn elbo_stub_examples() {
    let x = Matrix::zeros(2, 1);
    let y = LabeledEdges::empty(names(2));
    let l2pi = (2.0 * PI).ln();
    let mut rng = Rng::seed_from_u64(0);
    let d = elbo(&stub_state(Variant::DeepSem, 2, 1), &x, None, &mut rng).unwrap();
    assert_abs_diff_eq!(d, -l2pi, epsilon = 1e-9);
    assert_abs_diff_eq!(d, -1.837877, epsilon = 1e-6);
    let b = elbo(&stub_state(Variant::InfoSemB, 2, 1), &x, None, &mut rng).unwrap();
    assert_abs_diff_eq!(b, -2.0 * l2pi, epsilon = 1e-9);
    assert_abs_diff_eq!(b, -3.675754, epsilon = 1e-6);
    let bc_state = stub_state(Variant::InfoSemBc, 2, 1);
    let bc = elbo(&bc_state, &x, Some(&y), &mut rng).unwrap();
    assert_abs_diff_eq!(bc, -2.0 * l2pi, epsilon = 1e-9);
    // Term-by-term oracle for the BC stub.
    let logits = bc_state.logits.as_ref().unwrap();
    let ep = bc_state.embedding.as_ref().unwrap();
    let composed = compose_adjacency(&bc_state.adjacency, logits).unwrap();
    assert_eq!(composed, Matrix::zeros(2, 2));
    let terms = reconstruction_term(&x, &Matrix::zeros(2, 1), &bc_state.decoder).unwrap()
        + adjacency_prior_infosem_b(&bc_state.adjacency, ep, 0.5).unwrap()
        + label_prior(logits, &y, bc_state.prior.sigma_l).unwrap()
        + weight_prior(&ep.w, 1.0).unwrap()
        - kl_term(&Matrix::zeros(2, 1), &Matrix::ones(2, 1), &composed, 1.0).unwrap();
    assert_abs_diff_eq!(bc, terms, epsilon = 1e-9);
    assert!(matches!(
        elbo(&bc_state, &x, None, &mut rng),
        Err(Error::MissingInput(_))
    ));
}

fn labels_for(p: usize, seed: u64) -> LabeledEdges {
    let mut rng = Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..p {
        for k in 0..p {
            if i != k && rng.bernoulli(0.4) {
                edges.push(Edge::new(i, k, rng.bernoulli(0.3)));
            }
        }
    }
    LabeledEdges::new(names(p), edges).unwrap()
}

#[test]
fn graph_terms_match_value_level_ops() {
    for v in Variant::ALL {
        for seed in 0..4 {
            let mut st = sized_state(v, seed, 5, 2, 2);
            if seed == 3 {
                st.restrict_regulators(&[true, false, true, true, false]).unwrap();
            }
            let mut rng = Rng::seed_from_u64(seed + 40);
            let x = normal_matrix(&mut rng, 5, 6, 1.0);
            let eps = normal_matrix(&mut rng, 5, 6, 1.0);
            let y = labels_for(5, seed);
            let scale = 2.5;
            let obj = ElboObjective::new(&st, x.clone(), vec![eps.clone()], scale, Some(&y)).unwrap();
            let t = obj.terms(&st).unwrap();

            let (mu, std) = encode(&x, &st.encoder).unwrap();
            let z_hat = mu.add(&std.hadamard(&eps).unwrap()).unwrap();
            let recon = scale * reconstruction_term(&x, &z_hat, &st.decoder).unwrap();
            let a = match &st.logits {
                Some(l) => compose_adjacency(&st.adjacency, l).unwrap(),
                None => st.adjacency.clone(),
            };
            let kl = scale * kl_term(&mu, &std, &a, st.prior.sigma_z).unwrap();
            let adj_prior = adjacency_prior(&st).unwrap();
            if st.regulators.is_none() {
                let full = match &st.embedding {
                    Some(ep) => adjacency_prior_infosem_b(&st.adjacency, ep, st.prior.sigma_a).unwrap(),
                    None => adjacency_prior_deepsem(&st.adjacency, st.prior.sigma_a).unwrap(),
                };
                assert_eq!(adj_prior, full);
            }
            let wp = st
                .embedding
                .as_ref()
                .map_or(0.0, |ep| weight_prior(&ep.w, st.prior.sigma_w).unwrap());
            let lp = st
                .logits
                .as_ref()
                .map_or(0.0, |l| label_prior(l, &y, st.prior.sigma_l).unwrap());
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * (1.0 + a.abs().max(b.abs()));
            assert!(close(t.reconstruction, recon), "{v} recon {} vs {recon}", t.reconstruction);
            assert!(close(t.kl, kl), "{v} kl {} vs {kl}", t.kl);
            assert!(close(t.adjacency_prior, adj_prior), "{v} adj prior");
            assert!(close(t.weight_prior, wp), "{v} weight prior");
            assert!(close(t.label_prior, lp), "{v} label prior");
            let total = recon + adj_prior + wp + lp - st.prior.beta * kl;
            assert!(close(t.elbo, total), "{v} elbo {} vs {total}", t.elbo);
        }
    }
}

#[test]
fn elbo_gradients_pass_finite_differences() {
    for v in Variant::ALL {
        for seed in 0..3 {
            let mut st = sized_state(v, seed, 6, 3, 2);
            if seed == 2 {
                st.restrict_regulators(&[false, true, true, false, true, false]).unwrap();
            }
            let mut rng = Rng::seed_from_u64(seed);
            let x = normal_matrix(&mut rng, 6, 8, 1.0);
            let y = labels_for(6, seed);
            let obj = ElboObjective::sampled(&st, x, 1, 1.0, Some(&y), &mut rng).unwrap();
            let f = |t: &mut crate::autodiff::Tape, vars: &[crate::autodiff::Var]| obj.build(t, vars);
            let report = finite_diff_check(&f, &st.params(), 1e-5, 1e-4).unwrap();
            assert!(report.passed, "{v} seed {seed}: {}", report.max_rel_error);
        }
    }
}

#[test]
fn infosem_b_with_zero_w_reduces_to_deepsem() {
    let mut b = sized_state(Variant::InfoSemB, 5, 5, 3, 2);
    b.embedding.as_mut().unwrap().w = Matrix::zeros(1, 6);
    let d = ModelState {
        variant: Variant::DeepSem,
        embedding: None,
        ..b.clone()
    };
    let x = normal_matrix(&mut Rng::seed_from_u64(1), 5, 7, 1.0);
    let ob = ElboObjective::sampled(&b, x.clone(), 1, 1.0, None, &mut Rng::seed_from_u64(2)).unwrap();
    let od = ElboObjective::sampled(&d, x, 1, 1.0, None, &mut Rng::seed_from_u64(2)).unwrap();
    let (_, gb) = ob.value_and_gradient(&b.params()).unwrap();
    let (_, gd) = od.value_and_gradient(&d.params()).unwrap();
    for seg in gd.segments() {
        let x = gd.get(&seg.name).unwrap();
        let y = gb.get(&seg.name).unwrap();
        assert!(x.sub(&y).unwrap().max_abs() <= 1e-10, "{}", seg.name);
    }
}

#[test]
fn label_prior_gradient_has_closed_form() {
    let st = sized_state(Variant::InfoSemBc, 7, 5, 2, 2);
    let x = normal_matrix(&mut Rng::seed_from_u64(3), 5, 4, 1.0);
    let y = labels_for(5, 1);
    let empty = LabeledEdges::empty(names(5));
    let with = ElboObjective::sampled(&st, x.clone(), 1, 1.0, Some(&y), &mut Rng::seed_from_u64(4)).unwrap();
    let without = ElboObjective::sampled(&st, x, 1, 1.0, Some(&empty), &mut Rng::seed_from_u64(4)).unwrap();
    assert_eq!(without.terms(&st).unwrap().label_prior, 0.0);
    let (_, g1) = with.value_and_gradient(&st.params()).unwrap();
    let (_, g0) = without.value_and_gradient(&st.params()).unwrap();
    let l = st.logits.as_ref().unwrap();
    let prod = l.product().unwrap();
    let s2 = st.prior.sigma_l.powi(2);
    let mut g = Matrix::zeros(5, 5);
    for e in y.edges() {
        let mode = if e.label { logit_hi() } else { logit_lo() };
        g[(e.tf, e.tg)] = -(prod[(e.tf, e.tg)] - mode) / s2;
    }
    let ga = g.matmul(&l.b.transpose()).unwrap();
    let gb = l.a.transpose().matmul(&g).unwrap();
    let da = g1.get("logits.a").unwrap().sub(&g0.get("logits.a").unwrap()).unwrap();
    let db = g1.get("logits.b").unwrap().sub(&g0.get("logits.b").unwrap()).unwrap();
    assert!(da.sub(&ga).unwrap().max_abs() < 1e-8 * (1.0 + ga.max_abs()));
    assert!(db.sub(&gb).unwrap().max_abs() < 1e-8 * (1.0 + gb.max_abs()));
    for seg in g0.segments().iter().filter(|s| !s.name.starts_with("logits")) {
        assert_eq!(g0.get(&seg.name), g1.get(&seg.name), "{}", seg.name);
    }
}

#[test]
fn elbo_is_deterministic_given_seed() {
    for v in Variant::ALL {
        let st = sized_state(v, 2, 4, 2, 2);
        let x = normal_matrix(&mut Rng::seed_from_u64(8), 4, 5, 1.0);
        let y = labels_for(4, 2);
        let a = elbo(&st, &x, Some(&y), &mut Rng::seed_from_u64(77)).unwrap();
        let b = elbo(&st, &x, Some(&y), &mut Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn edge_score_examples() {
    let mut st = stub_state(Variant::DeepSem, 3, 1);
    let s = edge_scores(&st).unwrap();
    for i in 0..3 {
        for k in 0..3 {
            if i == k {
                assert_eq!(s[(i, k)], f64::NEG_INFINITY);
            } else {
                assert_eq!(s[(i, k)], 0.0);
            }
        }
    }
    st.adjacency[(0, 1)] = -0.4;
    st.adjacency[(1, 2)] = 0.2;
    let s = edge_scores(&st).unwrap();
    assert_eq!(s[(0, 1)], 0.4);
    assert!(s[(0, 1)] > s[(1, 2)]);
    st.adjacency[(1, 2)] = 0.9;
    assert!(edge_scores(&st).unwrap()[(1, 2)] > s[(0, 1)]);

    let mut bc = stub_state(Variant::InfoSemBc, 3, 1);
    let s = edge_scores(&bc).unwrap();
    assert_eq!(s[(0, 1)], 0.5);
    assert_eq!(s[(2, 1)], 0.5);
    bc.logits.as_mut().unwrap().a[(0, 0)] = 2.0;
    bc.logits.as_mut().unwrap().b[(0, 1)] = 1.0;
    bc.adjacency[(0, 1)] = -3.0;
    assert_eq!(edge_scores(&bc).unwrap()[(0, 1)], sigmoid(2.0));
    assert_eq!(edge_scores_with(&bc, BcScore::Effect).unwrap()[(0, 1)], 3.0);
    assert_abs_diff_eq!(
        edge_scores_with(&bc, BcScore::Composed).unwrap()[(0, 1)],
        3.0 * sigmoid(2.0),
        epsilon = 1e-15
    );
}

#[test]
fn constant_network_stub_uses_inverse_softplus() {
    let net = MlpParams::constant(0.0, 1.0);
    assert_eq!(net.scale_head.bias[(0, 0)], softplus_inv(1.0 - SCALE_FLOOR));
}

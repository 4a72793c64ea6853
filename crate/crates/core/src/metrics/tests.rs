use super::*;
use crate::phantom::{dead_leaves, generate, Phantom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

fn noisy(img: &Image2D, frac: f64, seed: u64) -> Image2D {
    let range = img.max() - img.min();
    let normal = Normal::new(0.0, frac * range).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    out
}

fn test_images() -> Vec<Image2D> {
    // natural-like texture, disjoint from the corpus seeds
    vec![dead_leaves(96, 96, 7), dead_leaves(96, 96, 8), dead_leaves(64, 64, 9), dead_leaves(128, 96, 10), dead_leaves(64, 128, 11)]
}

#[test]
fn mscn_of_constant_is_zero() {
    assert!(mscn(&Image2D::filled(12, 10, 0.37)).data().iter().all(|&v| v == 0.0));
}

#[test]
fn mscn_is_roughly_centred() {
    let m = mscn(&dead_leaves(96, 96, 3));
    assert!(m.mean().abs() < 0.05, "mean {}", m.mean());
    assert_eq!(m, mscn(&dead_leaves(96, 96, 3)));
}

#[test]
fn ggd_fit_recovers_known_shapes() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gauss: Vec<f64> = (0..200_000).map(|_| Normal::new(0.0, 2.0).unwrap().sample(&mut rng)).collect();
    let (a, v) = fit_ggd(&gauss).unwrap();
    assert!((a - 2.0).abs() < 0.05 && (v - 4.0).abs() < 0.05, "{a} {v}");
    let exp = Exp::new(1.0).unwrap();
    let laplace: Vec<f64> = (0..200_000).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * exp.sample(&mut rng)).collect();
    let (a, v) = fit_ggd(&laplace).unwrap();
    assert!((a - 1.0).abs() < 0.05 && (v - 2.0).abs() < 0.05, "{a} {v}");
    assert!(fit_ggd(&[0.0; 10]).is_none());
}

#[test]
fn aggd_fit_on_symmetric_gaussian() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..200_000).map(|_| Normal::new(0.0, 1.0).unwrap().sample(&mut rng)).collect();
    let [a, mean, l, r] = fit_aggd(&x).unwrap();
    assert!((a - 2.0).abs() < 0.05 && mean.abs() < 0.02 && (l - 1.0).abs() < 0.02 && (r - 1.0).abs() < 0.02);
}

#[test]
fn aggd_mean_sign_follows_skew() {
    let x: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 2.0 } else { -0.5 }).collect();
    assert!(fit_aggd(&x).unwrap()[1] > 0.0);
}

#[test]
fn features_are_finite_with_positive_shapes() {
    let f = brisque_features(&dead_leaves(64, 64, 5)).unwrap();
    assert!(f.0.iter().all(|v| v.is_finite()));
    for scale in 0..2 {
        let b = scale * 18;
        for idx in [b, b + 2, b + 6, b + 10, b + 14] {
            assert!(f.0[idx] > 0.0);
        }
    }
    assert!(matches!(brisque_features(&Image2D::filled(4, 4, 0.5)), Err(Error::Dimension(_))));
}

#[test]
fn smooth_phantom_scores_are_finite() {
    let model = MvgModel::bundled();
    for kind in Phantom::ALL {
        let img = generate(kind, 64, 64, 1.0).unwrap();
        assert!(brisque(&img, model).unwrap().value.is_finite());
        assert!(niqe(&img, model).unwrap().value.is_finite());
    }
}

#[test]
fn constant_image_uses_fallback() {
    let model = MvgModel::bundled();
    let s = brisque(&Image2D::filled(32, 32, 0.2), model).unwrap();
    assert_eq!(s.value, DEGENERATE_SCORE);
    assert!(s.warning.is_some());
    let n = niqe(&Image2D::filled(32, 32, 0.2), model).unwrap();
    assert_eq!(n.value, DEGENERATE_SCORE);
}

#[test]
fn scores_increase_with_noise() {
    let model = MvgModel::bundled();
    for (k, img) in test_images().iter().enumerate() {
        let mut last = (
            brisque_score(&brisque_features(img).unwrap(), model),
            niqe_score(img, model).unwrap(),
        );
        for (j, frac) in [0.02, 0.05, 0.1].into_iter().enumerate() {
            let n = noisy(img, frac, 100 + j as u64);
            let cur = (brisque_score(&brisque_features(&n).unwrap(), model), niqe_score(&n, model).unwrap());
            assert!(cur.0 > last.0, "image {k} brisque at {frac}: {} -> {}", last.0, cur.0);
            assert!(cur.1 > last.1, "image {k} niqe at {frac}: {} -> {}", last.1, cur.1);
            last = cur;
        }
    }
}

#[test]
fn scores_are_offset_invariant_and_deterministic() {
    let model = MvgModel::bundled();
    let img = dead_leaves(64, 64, 11);
    let shifted = img.map(|v| v + 0.3);
    let (b0, b1) = (brisque(&img, model).unwrap().value, brisque(&shifted, model).unwrap().value);
    let (n0, n1) = (niqe(&img, model).unwrap().value, niqe(&shifted, model).unwrap().value);
    assert!((b0 - b1).abs() < 1e-6 && (n0 - n1).abs() < 1e-6, "{b0} {b1} {n0} {n1}");
    assert_eq!(b0, brisque(&img, model).unwrap().value);
    assert_eq!(n0, niqe(&img, model).unwrap().value);
}

#[test]
fn identical_corpus_has_zero_covariance() {
    let img = dead_leaves(64, 64, 2);
    let m = MvgModel::from_samples(&[brisque_features(&img).unwrap().0; 4]).unwrap();
    assert!(m.cov.iter().all(|&v| v == 0.0));
}

#[test]
fn model_refit_is_identical_and_psd() {
    let corpus: Vec<Image2D> = (0..3).map(|s| dead_leaves(64, 64, 20 + s)).collect();
    let a = fit_pristine_model(&corpus).unwrap();
    assert_eq!(a, fit_pristine_model(&corpus).unwrap());
    assert!((&a.cov - a.cov.transpose()).amax() <= 1e-12);
    assert!(a.cov.clone().symmetric_eigenvalues().min() >= -1e-10);
}

#[test]
fn bundled_model_matches_procedural_corpus() {
    let refit = fit_pristine_model(&pristine_corpus()).unwrap();
    let bundled = MvgModel::bundled();
    assert_eq!(bundled.mean.len(), FEATURE_DIM);
    let scale = bundled.cov.amax();
    assert!((&refit.mean - &bundled.mean).amax() < 1e-9);
    assert!((&refit.cov - &bundled.cov).amax() < 1e-9 * scale);
}

#[test]
fn model_file_round_trip() {
    let m = fit_pristine_model(&[dead_leaves(64, 64, 1), dead_leaves(64, 64, 2)]).unwrap();
    let mut buf = Vec::new();
    m.write(&mut buf).unwrap();
    assert_eq!(&buf[..8], b"PPMVG001");
    assert_eq!(buf.len(), 16 + 8 * (FEATURE_DIM + FEATURE_DIM * FEATURE_DIM));
    assert_eq!(MvgModel::read(&buf[..]).unwrap(), m);
    buf[0] = b'X';
    assert!(MvgModel::read(&buf[..]).is_err());
}

#[test]
fn patch_size_rule() {
    assert_eq!(niqe_patch_size(64, 64), 16);
    assert_eq!(niqe_patch_size(440, 440), 96);
    assert_eq!(niqe_patch_size(200, 300), 50);
}

#[test]
fn linear_scorer_parses_and_scores() {
    let mut text = String::from("1.5");
    for i in 0..FEATURE_DIM {
        text.push_str(if i == 0 { " 2" } else { " 0" });
    }
    let s = LinearScorer::parse(&text).unwrap();
    let mut f = [0.0; FEATURE_DIM];
    f[0] = 3.0;
    assert_eq!(s.score(&NssFeatures(f)), 7.5);
    assert!(LinearScorer::parse("1 2 3").is_err());
}

#[test]
fn skew_of_reference_triangles() {
    let h = 3f64.sqrt() / 2.0;
    assert_eq!(triangle_skew([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, h, 0.0]), 0.0);
    let right = triangle_skew([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]);
    assert!((right - 0.25).abs() < 1e-12, "{right}");
    // apex angle 179 degrees, base angles 0.5 degrees
    let t = 0.5f64.to_radians().tan();
    let sliver = triangle_skew([0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [1.0, t, 0.0]);
    assert!(sliver >= 0.99, "{sliver}");
    assert_eq!(triangle_skew([0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]), 1.0);
}

#[test]
fn flat_grid_skewness() {
    let mesh = crate::surface::mesh_from_height(&HeightField { u: Image2D::zeros(6, 6), h: 0.2 }).unwrap();
    let s = mesh_skewness(&mesh).unwrap();
    assert!((s.mean - 0.25).abs() < 1e-12 && (s.max - 0.25).abs() < 1e-12);
}

#[test]
fn skewness_in_unit_interval_on_random_mesh() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u = Image2D::from_fn(10, 10, |_, _| rng.gen_range(0.0..3.0));
    let s = mesh_skewness(&crate::surface::mesh_from_height(&HeightField { u, h: 0.1 }).unwrap()).unwrap();
    assert!(s.mean > 0.0 && s.mean <= s.max && s.max <= 1.0);
}

#[test]
fn mesh_mse_axioms() {
    let a = HeightField { u: Image2D::from_fn(5, 5, |r, c| (r + c) as f64 / 8.0), h: 1.0 };
    let b = HeightField { u: Image2D::from_fn(5, 5, |r, c| (r * c) as f64 / 16.0), h: 1.0 };
    assert_eq!(mesh_mse(&a, &a).unwrap(), 0.0);
    assert!(mesh_mse(&a, &b).unwrap() > 0.0);
    assert_eq!(mesh_mse(&a, &b).unwrap(), mesh_mse(&b, &a).unwrap());
    let zero = HeightField { u: Image2D::zeros(5, 5), h: 1.0 };
    let one = HeightField { u: Image2D::filled(5, 5, 1.0), h: 1.0 };
    assert_eq!(mesh_mse(&zero, &one).unwrap(), 1.0);
    assert!(mesh_mse(&zero, &HeightField { u: Image2D::zeros(4, 5), h: 1.0 }).is_err());
}

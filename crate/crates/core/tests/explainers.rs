use tsattr_core::data::{Window, WindowedSample};
use tsattr_core::explain::*;
use tsattr_core::predict::tree::{Node, Tree};
use tsattr_core::predict::{FnPredictor, InputShape, LogisticModel, Predictor, PredictorHandle, LogisticConfig};
use tsattr_core::synthetic::{uniform_windows, TreeAverage};
use tsattr_core::Error;

fn window(shape: InputShape, values: Vec<f64>) -> Window {
    Window::new(shape.n_features, shape.window_length, values).unwrap()
}

fn sample(shape: InputShape, values: Vec<f64>) -> WindowedSample {
    WindowedSample::new(7, 1, None, window(shape, values))
}

fn background(shape: InputShape, rows: Vec<f64>) -> BackgroundSet {
    BackgroundSet::from_rows(BackgroundMode::Sampled, shape, 0, rows)
}

/// Shapley values as the average marginal contribution over every ordering.
fn permutation_oracle(f: &dyn Predictor, x: &[f64], bg: &BackgroundSet, scheme: &PlayerScheme) -> (f64, Vec<f64>) {
    let m = scheme.len();
    let value = |members: &[usize]| -> f64 {
        let mut total = 0.0;
        for b in 0..bg.len() {
            let mut row = bg.row(b).to_vec();
            for &j in members {
                for &c in &scheme.players()[j].cells {
                    row[c] = x[c];
                }
            }
            total += f.predict_rows(&row).unwrap()[0];
        }
        total / bg.len() as f64
    };
    fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.clone();
            let head = rest.remove(i);
            for mut p in permutations(rest) {
                p.insert(0, head);
                out.push(p);
            }
        }
        out
    }
    let perms = permutations((0..m).collect());
    let mut phi = vec![0.0; m];
    for p in &perms {
        let mut prefix = Vec::new();
        let mut prev = value(&prefix);
        for &j in p {
            prefix.push(j);
            let next = value(&prefix);
            phi[j] += next - prev;
            prev = next;
        }
    }
    phi.iter_mut().for_each(|v| *v /= perms.len() as f64);
    (value(&[]), phi)
}

#[test]
fn constant_model_gives_zero_attributions() {
    let shape = InputShape::new(2, 2);
    let f = FnPredictor::new(shape, |_| 0.7);
    let s = sample(shape, vec![1.0, 2.0, 3.0, 4.0]);
    let bg = background(shape, vec![0.0; 8]);
    let scheme = PlayerScheme::plain(shape, Granularity::Cell);
    let a = exact_shapley(&f, &s, &bg, &scheme).unwrap();
    assert!((a.base_value - 0.7).abs() < 1e-15);
    assert!(a.values.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn linear_model_with_single_background_point() {
    let shape = InputShape::new(2, 3);
    let w = [0.3, -0.2, 0.5, 0.1, -0.4, 0.25];
    let f = FnPredictor::new(shape, move |r| r.iter().zip(&w).map(|(a, b)| a * b).sum());
    let x = vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0];
    let b = vec![0.5, -1.0, 0.0, 2.0, 1.0, -2.0];
    let a = exact_shapley(&f, &sample(shape, x.clone()), &background(shape, b.clone()), &PlayerScheme::plain(shape, Granularity::Cell)).unwrap();
    for j in 0..6 {
        assert!((a.values.as_slice()[j] - w[j] * (x[j] - b[j])).abs() < 1e-12);
    }
}

#[test]
fn two_leaf_tree_matches_brute_force_oracle() {
    let shape = InputShape::new(4, 1);
    let tree = Tree::from_nodes(vec![
        Node::Split { column: 2, threshold: 0.0, left: 1, right: 2 },
        Node::Leaf { value: 0.1 },
        Node::Leaf { value: 0.9 },
    ]);
    let f = TreeAverage::new(shape, vec![tree]);
    let x = vec![0.3, -0.6, 0.8, 0.2];
    let bg = background(shape, vec![-1.0, 0.0, -0.5, 0.3, 0.4, 0.4, 0.7, -0.9, 0.0, 0.0, -0.1, 0.0]);
    let scheme = PlayerScheme::plain(shape, Granularity::Cell);
    let a = exact_shapley(&f, &sample(shape, x.clone()), &bg, &scheme).unwrap();
    let (base, phi) = permutation_oracle(&f, &x, &bg, &scheme);
    assert!((a.base_value - base).abs() < 1e-12);
    for (got, want) in a.values.as_slice().iter().zip(&phi) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
    // only column 2 matters
    assert!(a.values.as_slice()[2] > 0.0);
    assert_eq!(a.values.as_slice()[0], 0.0);
}

#[test]
fn random_trees_match_oracle_and_kernel_enumeration() {
    for seed in 0..6 {
        let shape = InputShape::new(5, 1);
        let f = TreeAverage::random(shape, 3, 3, seed);
        let x = uniform_windows(shape, 1, 100, seed).remove(0);
        let bg_rows: Vec<f64> = uniform_windows(shape, 4, 0, seed).iter().flat_map(|s| s.values.as_slice().to_vec()).collect();
        let bg = background(shape, bg_rows);
        let scheme = PlayerScheme::plain(shape, Granularity::Cell);
        let exact = exact_shapley(&f, &x, &bg, &scheme).unwrap();
        let (_, phi) = permutation_oracle(&f, x.values.as_slice(), &bg, &scheme);
        let kernel = kernel_shap(&f, &x, &bg, &scheme, 30, 1).unwrap();
        for j in 0..5 {
            assert!((exact.values.as_slice()[j] - phi[j]).abs() < 1e-12);
            assert!((kernel.values.as_slice()[j] - phi[j]).abs() < 1e-9);
        }
        assert_eq!(kernel.diagnostics.coalitions, 32);
    }
}

#[test]
fn null_player_and_symmetry() {
    let shape = InputShape::new(4, 1);
    // symmetric in cells 0 and 1; ignores nothing but cell 3 equals background
    let f = FnPredictor::new(shape, |r| 0.2 * (r[0] + r[1]) + 0.5 * r[0] * r[1] + 0.3 * r[2] * r[3]);
    let x = vec![0.4, 0.4, -0.7, 0.25];
    let bg = background(shape, vec![0.1, 0.1, 0.3, 0.25, -0.5, -0.5, 0.9, 0.25]);
    let scheme = PlayerScheme::plain(shape, Granularity::Cell);
    let s = sample(shape, x);
    let exact = exact_shapley(&f, &s, &bg, &scheme).unwrap();
    let v = exact.values.as_slice();
    assert!(v[3].abs() <= 1e-9);
    assert!((v[0] - v[1]).abs() <= 1e-6);
    let kernel = kernel_shap(&f, &s, &bg, &scheme, 14, 0).unwrap();
    assert!((kernel.values.as_slice()[0] - kernel.values.as_slice()[1]).abs() <= 1e-6);
}

#[test]
fn sampled_kernel_is_efficient_and_seeded() {
    let shape = InputShape::new(6, 4);
    let f = TreeAverage::random(shape, 8, 4, 3);
    let x = uniform_windows(shape, 1, 50, 1).remove(0);
    let bg_rows: Vec<f64> = uniform_windows(shape, 10, 0, 2).iter().flat_map(|s| s.values.as_slice().to_vec()).collect();
    let bg = background(shape, bg_rows);
    let scheme = PlayerScheme::plain(shape, Granularity::Cell);
    let a = kernel_shap(&f, &x, &bg, &scheme, 200, 9).unwrap();
    assert!((a.base_value + a.total() - a.prediction).abs() < 1e-6);
    let b = kernel_shap(&f, &x, &bg, &scheme, 200, 9).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| kernel_shap(&f, &x, &bg, &scheme, 200, 9).unwrap());
    assert_eq!(a, c);
    let d = kernel_shap(&f, &x, &bg, &scheme, 200, 10).unwrap();
    assert_ne!(a.values, d.values);
}

#[test]
fn guards_and_errors() {
    let shape = InputShape::new(21, 1);
    let f = FnPredictor::new(shape, |_| 0.5);
    let s = sample(shape, vec![0.0; 21]);
    let bg = background(shape, vec![0.0; 21]);
    let scheme = PlayerScheme::plain(shape, Granularity::Cell);
    assert!(matches!(
        exact_shapley(&f, &s, &bg, &scheme),
        Err(Error::EnumerationLimit { players: 21, limit: 20 })
    ));
    assert!(matches!(
        kernel_shap(&f, &s, &bg, &scheme, 22, 0),
        Err(Error::InsufficientSamples { requested: 22, minimum: 23, players: 21 })
    ));
    let bad = FnPredictor::new(shape, |_| f64::NAN);
    assert!(matches!(kernel_shap(&bad, &s, &bg, &scheme, 100, 0), Err(Error::NonFinite(_))));
    let cfg = LimeConfig { kernel_width: Some(0.0), ..Default::default() };
    assert!(matches!(lime_explain(&f, &s, &bg, &scheme, &cfg), Err(Error::KernelWidth(_))));
    let cfg = LimeConfig { kernel_width: Some(1e-3), ..Default::default() };
    assert!(matches!(lime_explain(&f, &s, &bg, &scheme, &cfg), Err(Error::KernelWidth(_))));
}

#[test]
fn feature_players_split_evenly() {
    let shape = InputShape::new(2, 3);
    let f = FnPredictor::new(shape, |r| r[0] + r[1] + r[2] - r[5]);
    let s = sample(shape, vec![1.0, 1.0, 1.0, 0.0, 0.0, 3.0]);
    let bg = background(shape, vec![0.0; 6]);
    let scheme = PlayerScheme::plain(shape, Granularity::Feature);
    let a = exact_shapley(&f, &s, &bg, &scheme).unwrap();
    assert_eq!(scheme.collapse(&a.values), vec![3.0, -3.0]);
    assert_eq!(a.values.get(0, 1), 1.0);
    assert_eq!(a.values.get(1, 0), -1.0);
}

#[test]
fn lime_constant_and_linear_models() {
    let shape = InputShape::new(8, 1);
    let scheme = PlayerScheme::plain(shape, Granularity::Cell);
    let s = sample(shape, vec![1.0; 8]);
    let bg = background(shape, [vec![1.0; 8], vec![-1.0; 8]].concat());
    let constant = FnPredictor::new(shape, |_| 0.4);
    let a = lime_explain(&constant, &s, &bg, &scheme, &LimeConfig::default()).unwrap();
    assert!(a.values.as_slice().iter().all(|v| v.abs() < 1e-9));
    assert!((a.base_value - 0.4).abs() < 1e-9);

    let w = vec![0.8, -0.6, 0.45, -0.3, 0.2, 0.12, -0.06, 0.02];
    let model = LogisticModel::from_coefficients(w.clone(), 0.1);
    let handle = PredictorHandle::from_logistic(shape, model, LogisticConfig::default()).unwrap();
    let cfg = LimeConfig { num_perturbations: Some(400), seed: 4, ..Default::default() };
    let a = lime_explain(&handle, &s, &bg, &scheme, &cfg).unwrap();
    for (b, w) in a.values.as_slice().iter().zip(&w) {
        assert_eq!(b.signum(), w.signum(), "{b} vs {w}");
    }
    let mut order: Vec<usize> = (0..8).collect();
    order.sort_by(|&i, &j| a.values.as_slice()[j].abs().total_cmp(&a.values.as_slice()[i].abs()));
    assert_eq!(order[..4], [0, 1, 2, 3]);

    let top = LimeConfig { top_k: Some(2), ..cfg };
    let a = lime_explain(&handle, &s, &bg, &scheme, &top).unwrap();
    assert_eq!(a.values.as_slice().iter().filter(|v| **v != 0.0).count(), 2);
}

fn labeled(shape: InputShape, n: usize, seed: u64, label: impl Fn(&[f64]) -> u8) -> Vec<WindowedSample> {
    uniform_windows(shape, n, 0, seed)
        .into_iter()
        .map(|s| {
            let y = label(s.values.as_slice());
            WindowedSample::new(s.sample_id, y, None, s.values)
        })
        .collect()
}

#[test]
fn permutation_importance_cases() {
    let shape = InputShape::new(2, 3);
    let data = labeled(shape, 600, 5, |r| u8::from(r[0] > 0.0));
    let stump = FnPredictor::new(shape, |r| if r[0] > 0.0 { 1.0 } else { 0.0 });
    let scores = permutation_importance(&stump, &data, 10, 1).unwrap();
    assert!(scores[1].score.abs() <= 0.01);
    assert_eq!(scores[1].std, 0.0);
    assert!((scores[0].score - 0.5).abs() < 0.05, "{}", scores[0].score);
    assert_eq!(scores, permutation_importance(&stump, &data, 10, 1).unwrap());
    assert!(permutation_importance(&stump, &[], 10, 1).is_err());

    // the same signal spread over two copies loses less per copy
    let unique = FnPredictor::new(shape, |r| 1.0 / (1.0 + (-20.0 * (r[0] + r[1] + r[2])).exp()));
    let split = FnPredictor::new(shape, |r| 1.0 / (1.0 + (-10.0 * (r[0] + r[1] + r[2] + r[3] + r[4] + r[5])).exp()));
    let data_sum = labeled(shape, 600, 6, |r| u8::from(r[0] + r[1] + r[2] > 0.0));
    let dup_sum: Vec<WindowedSample> = data_sum
        .iter()
        .map(|s| {
            let mut w = s.values.clone();
            for t in 0..3 {
                w.set(1, t, w.get(0, t));
            }
            WindowedSample::new(s.sample_id, s.label, None, w)
        })
        .collect();
    let one = permutation_importance(&unique, &data_sum, 10, 2).unwrap()[0].score;
    let two = permutation_importance(&split, &dup_sum, 10, 2).unwrap();
    assert!(two[0].score < one && two[1].score < one, "{one} vs {:?}", two);
}

#[test]
fn attribution_files_round_trip() {
    use tsattr_core::data::{FeatureKind, FeatureSpec, WindowSchema};
    let schema = WindowSchema::new(
        vec![FeatureSpec::new("a", FeatureKind::Dynamic), FeatureSpec::new("b", FeatureKind::Dynamic)],
        3,
    )
    .unwrap();
    let shape = InputShape::new(2, 3);
    let f = TreeAverage::random(shape, 4, 3, 11);
    let samples = uniform_windows(shape, 3, 20, 4);
    let bg_rows: Vec<f64> = uniform_windows(shape, 5, 0, 5).iter().flat_map(|s| s.values.as_slice().to_vec()).collect();
    let bg = background(shape, bg_rows);
    let scheme = PlayerScheme::from_schema(&schema, Granularity::Cell, false);
    let method = Method::Kernel { num_coalitions: Some(40) };
    let refs: Vec<&WindowedSample> = samples.iter().collect();
    let req = ExplainRequest { model_id: "m", dataset_digest: "d", background: &bg, scheme: &scheme, method: &method, seed: 3 };
    let set = explain_samples(&f, &refs, &req).unwrap();
    let dir = tempfile::tempdir().unwrap();
    set.save(dir.path(), &schema).unwrap();
    let back = AttributionSet::load(dir.path(), &schema).unwrap();
    assert_eq!(back, set);
    let bytes = std::fs::read(dir.path().join(ATTRIBUTIONS_FILE)).unwrap();
    set.save(dir.path(), &schema).unwrap();
    assert_eq!(bytes, std::fs::read(dir.path().join(ATTRIBUTIONS_FILE)).unwrap());
}

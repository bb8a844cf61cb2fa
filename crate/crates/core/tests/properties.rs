use hypercluster::metrics::{ami, ari};
use hypercluster::pointset::{synth_sine_dataset, Resampler, SineClass, SynthConfig};
use hypercluster::{embed_dataset, init_hypernet, train, HyperConfig, HyperNet, PointSet, SirenSpec, TrainConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(coords: Vec<f32>, values: Vec<f32>) -> PointSet {
    PointSet::new("p", None, 2, 1, coords, values).unwrap()
}

fn point_set() -> impl Strategy<Value = PointSet> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f32..1.0, 2 * n),
            prop::collection::vec(-1.0f32..1.0, n),
        )
            .prop_map(|(c, v)| points(c, v))
    })
}

fn labels(max_n: usize) -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (2usize..max_n).prop_flat_map(|n| (prop::collection::vec(0u32..5, n), prop::collection::vec(0u32..5, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_ignore_point_order(ps in point_set(), seed in 0u64..1000) {
        let hn: HyperNet<f32> = init_hypernet(SirenSpec::new(2, 1, 3, 4).unwrap(), HyperConfig::default(), 1).unwrap();
        let mut order: Vec<usize> = (0..ps.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(hn.predict_weights(&ps).unwrap(), hn.predict_weights(&ps.reindexed(&order)).unwrap());
    }

    #[test]
    fn metrics_are_symmetric((a, b) in labels(40)) {
        prop_assert_eq!(ari(&a, &b).unwrap(), ari(&b, &a).unwrap());
        prop_assert_eq!(ami(&a, &b).unwrap(), ami(&b, &a).unwrap());
    }

    #[test]
    fn metrics_ignore_label_names((a, b) in labels(40), shift in 1u32..50) {
        let renamed: Vec<u32> = b.iter().map(|&l| (4 - l) * 7 + shift).collect();
        prop_assert_eq!(ari(&a, &b).unwrap(), ari(&a, &renamed).unwrap());
        prop_assert!((ami(&a, &b).unwrap() - ami(&a, &renamed).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn self_agreement_is_perfect((a, _) in labels(40)) {
        prop_assert_eq!(ari(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(ami(&a, &a).unwrap(), 1.0);
    }
}

#[test]
fn independent_partitions_score_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let trials = 200;
    let (mut sum_ami, mut sum_ari) = (0.0, 0.0);
    for _ in 0..trials {
        let a: Vec<u32> = (0..200).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u32> = (0..200).map(|_| rng.random_range(0..4)).collect();
        sum_ami += ami(&a, &b).unwrap();
        sum_ari += ari(&a, &b).unwrap();
    }
    let (mean_ami, mean_ari) = (sum_ami / trials as f64, sum_ari / trials as f64);
    assert!(mean_ami.abs() < 0.005, "mean AMI {mean_ami}");
    assert!(mean_ari.abs() < 0.005, "mean ARI {mean_ari}");
}

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| f64::from(x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn trained_embeddings_are_mesh_consistent_and_separate_classes() {
    let class = |f: f64| SineClass::new(f).with_amp(0.8, 1.2).with_phase(0.0, std::f64::consts::FRAC_PI_2);
    let data = synth_sine_dataset(&SynthConfig {
        classes: vec![class(1.0), class(3.0)],
        n_per_class: 60,
        channels: 1,
        points: (128, 128),
        irregular: false,
        seed: 4,
    })
    .unwrap();
    let mut cfg = TrainConfig::new(SirenSpec::new(1, 1, 4, 5).unwrap(), vec![16, 32, 64]);
    cfg.epochs = 40;
    cfg.batch_size = 16;
    let model = train::<f32>(data.unlabeled(), &cfg).unwrap().model;
    let source = Resampler::new(&data);

    let coarse = embed_dataset(&model, &source, 32, 1).unwrap();
    let fine = embed_dataset(&model, &source, 128, 1).unwrap();
    let mut pairwise = Vec::new();
    for i in 0..coarse.len() {
        for j in i + 1..coarse.len() {
            pairwise.push(dist(&coarse[i], &coarse[j]));
        }
    }
    pairwise.sort_by(f64::total_cmp);
    let median = pairwise[pairwise.len() / 2];
    for (n, (a, b)) in coarse.iter().zip(&fine).enumerate() {
        let rel = dist(a, b) / median;
        assert!(rel < 0.2, "sample {n}: mesh gap {rel:.3} of the median distance");
    }

    let labels = data.labels().unwrap();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..coarse.len() {
        for j in i + 1..coarse.len() {
            let d = dist(&coarse[i], &coarse[j]);
            if labels[i] == labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let (intra, inter) = (intra / n_intra as f64, inter / n_inter as f64);
    assert!(inter > intra, "inter-class {inter:.4} <= intra-class {intra:.4}");
}

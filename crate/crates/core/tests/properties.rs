//! Property tests for invariants that hold for every input.

use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ntkae::activation::Activation;
use ntkae::data::Dataset;
use ntkae::experiments::{ExperimentConfig, ExperimentId, Row, Table, Value};
use ntkae::idx::{parse_idx, write_idx, IMAGE_MAGIC};
use ntkae::kernels::closed_form::closed_form_ntk_2layer;
use ntkae::net::NetworkParams;
use ntkae::rng::derive_seed;

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_is_symmetric_and_bounded_below(a in vector(5), b in vector(5)) {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let ab = closed_form_ntk_2layer(&a, &b).unwrap();
        let ba = closed_form_ntk_2layer(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(1.0));
        prop_assert!(closed_form_ntk_2layer(&a, &a).unwrap() >= 0.25 - 1e-12);
    }

    #[test]
    fn closed_form_cauchy_schwarz(a in vector(4), b in vector(4)) {
        let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
        let ab = closed_form_ntk_2layer(&a, &b).unwrap();
        let aa = closed_form_ntk_2layer(&a, &a).unwrap();
        let bb = closed_form_ntk_2layer(&b, &b).unwrap();
        prop_assert!(ab * ab <= aa * bb * (1.0 + 1e-12));
    }

    #[test]
    fn random_sphere_has_radius(n0 in 2usize..12, seed in any::<u64>(), r in 0.01..1e4f64) {
        let n = 1 + (seed as usize) % n0;
        let d = Dataset::random_sphere(n0, n, r, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for c in d.x().column_iter() {
            prop_assert!((c.norm() - r).abs() <= 1e-10 * r);
        }
    }

    #[test]
    fn seeds_are_deterministic_and_path_sensitive(m in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        prop_assert_eq!(derive_seed(m, &[a, b]), derive_seed(m, &[a, b]));
        if a != b {
            prop_assert_ne!(derive_seed(m, &[a, b]), derive_seed(m, &[b, a]));
        }
    }

    #[test]
    fn idx_round_trip(d0 in 1usize..5, d1 in 1usize..6, d2 in 1usize..6, fill in any::<u8>()) {
        let data: Vec<u8> = (0..d0 * d1 * d2).map(|k| (k as u8).wrapping_mul(fill)).collect();
        let bytes = write_idx(&[d0, d1, d2], &data).unwrap();
        let t = parse_idx(&bytes, IMAGE_MAGIC).unwrap();
        prop_assert_eq!(&t.dims, &vec![d0, d1, d2]);
        prop_assert_eq!(write_idx(&t.dims, &t.data).unwrap(), bytes.clone());
        for cut in [1usize, 3, 7] {
            if cut <= bytes.len() {
                prop_assert!(parse_idx(&bytes[..bytes.len() - cut], IMAGE_MAGIC).is_err());
            }
        }
    }

    #[test]
    fn checkpoint_round_trip(seed in any::<u64>(), width in 1usize..9, depth in 1usize..4, tag in 0usize..4) {
        let act = [Activation::Sigmoid, Activation::Erf, Activation::Tanh, Activation::linear(0.25, 0.5)][tag];
        let net = NetworkParams::autoencoder(3, width, depth, act, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut buf = Vec::new();
        net.write_checkpoint(&mut buf).unwrap();
        let back = NetworkParams::read_checkpoint(buf.as_slice()).unwrap();
        prop_assert_eq!(back.dims(), net.dims());
        prop_assert_eq!(back.activation(), act);
        for (a, b) in back.weights().iter().zip(net.weights()) {
            prop_assert_eq!(a, b);
        }
        prop_assert!(NetworkParams::read_checkpoint(&buf[..buf.len() - 1]).is_err());
    }

    #[test]
    fn csv_cells_are_never_empty(vals in prop::collection::vec((any::<i32>(), any::<f64>(), ".{0,8}"), 1..6)) {
        let mut t = Table::new("p", &["i", "f", "s"]);
        for (k, (i, f, s)) in vals.iter().enumerate() {
            t.push(Row::new(k, 0, vec![Value::Int(*i as i64), Value::Float(*f), Value::Text(s.clone())])).unwrap();
        }
        let text = t.to_csv_string().unwrap();
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let mut rows = 0;
        for rec in rdr.records() {
            let rec = rec.unwrap();
            prop_assert_eq!(rec.len(), 6);
            prop_assert!(rec.iter().all(|c| !c.is_empty()));
            rows += 1;
        }
        prop_assert_eq!(rows, vals.len());
    }

    #[test]
    fn config_grids_parse(radii in prop::collection::vec(0.001..1e5f64, 1..6)) {
        let text: Vec<String> = radii.iter().map(|r| format!("{r:?}")).collect();
        let mut c = ExperimentConfig::new(ExperimentId::RadiusCurve);
        c.set("r", &text.join(", ")).unwrap();
        prop_assert_eq!(&c.radii, &radii);
        prop_assert!(c.validate().is_ok());
    }

    #[test]
    fn linear_network_jacobian_is_constant(seed in any::<u64>(), x in vector(3), y in vector(3)) {
        let net = NetworkParams::autoencoder(3, 7, 3, Activation::linear(0.5, 0.1), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let a = net.jacobian(&DVector::from_vec(x)).unwrap();
        let b = net.jacobian(&DVector::from_vec(y)).unwrap();
        prop_assert!((a - b).amax() <= 1e-12);
    }
}

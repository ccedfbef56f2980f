//! Model encodings and digests pinned against fixtures produced by
//! `tests/fixtures/golden.py`.

use faircert::crypto::merkle_root;
use faircert::model::{BiasedWrapper, LinearModel, LookupModel};
use faircert::{Fixed, Micro, ModelSpec};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

fn fx(x: f64) -> Fixed {
    Fixed::from_f64(x)
}

fn golden(name: &str) -> (Vec<u8>, usize, String) {
    let bytes = std::fs::read(format!("{FIXTURES}/golden_{name}.bin")).unwrap();
    let roots = std::fs::read_to_string(format!("{FIXTURES}/golden_roots.txt")).unwrap();
    let line = roots.lines().find(|l| l.starts_with(&format!("{name} "))).unwrap();
    let fields: Vec<&str> = line.split_whitespace().collect();
    (bytes, fields[1].parse().unwrap(), fields[2].to_string())
}

fn models() -> Vec<(&'static str, ModelSpec)> {
    let linear = LinearModel::new(
        vec![vec![fx(1.5), fx(-2.0), fx(0.25)], vec![fx(0.0), fx(0.5), fx(-1.0)]],
        vec![fx(0.125), fx(-3.0)],
    )
    .unwrap();
    let lookup = LookupModel::new(2, 3, 2, [(vec![fx(1.0), fx(2.0)], 0), (vec![fx(-1.0), fx(0.0)], 1)]).unwrap();
    let wrapper = BiasedWrapper::new(
        LinearModel::coordinate_argmax(4, 2).unwrap().into(),
        vec![Micro::from_units(100_000), Micro::from_units(250_000)],
        0x0123_4567_89AB_CDEF,
    )
    .unwrap();
    vec![("linear", linear.into()), ("lookup", lookup.into()), ("wrapper", wrapper.into())]
}

#[test]
fn canonical_bytes_match_golden_files() {
    for (name, model) in models() {
        let (bytes, len, _) = golden(name);
        assert_eq!(bytes.len(), len, "{name}");
        assert_eq!(model.to_bytes(), bytes, "{name}");
    }
}

#[test]
fn golden_files_decode_to_the_same_models() {
    for (name, model) in models() {
        let (bytes, _, _) = golden(name);
        assert_eq!(ModelSpec::from_bytes(&bytes).unwrap(), model, "{name}");
    }
}

#[test]
fn merkle_roots_match_golden_digests() {
    for (name, model) in models() {
        let (_, _, root) = golden(name);
        assert_eq!(merkle_root(&model.to_bytes()).unwrap().to_hex(), root, "{name}");
    }
}

#[test]
fn truncations_decode_only_at_rate_boundaries() {
    for (name, model) in models() {
        let (bytes, _, root) = golden(name);
        for cut in 0..bytes.len() {
            let Ok(decoded) = ModelSpec::from_bytes(&bytes[..cut]) else { continue };
            // the rate block carries no count, so dropping whole rates from a
            // wrapper leaves a well-formed wrapper over fewer groups
            let ModelSpec::BiasedWrapper(w) = &model else { panic!("{name} cut at {cut} decoded") };
            let rates_start = bytes.len() - 8 - 4 * w.flip_rates().len();
            assert!(cut > rates_start + 8 && (cut - rates_start - 8) % 4 == 0, "{name} cut at {cut}");
            assert_ne!(decoded, model);
            assert_ne!(merkle_root(&bytes[..cut]).unwrap().to_hex(), root);
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(ModelSpec::from_bytes(&longer).is_err(), "{name} with trailing byte");
    }
}

use std::collections::BTreeMap;

use proptest::prelude::*;
use zoomeval::tensor_io::{decode, encode, read_tensor_file, write_tensor_file, Tensor, TensorError, TensorFile};

fn name() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("tokens".to_string()),
        Just("attention".to_string()),
        Just("mask".to_string()),
        "[a-zA-Z0-9_.é漢-]{1,12}".prop_filter("reserved prefix", |s| !s.starts_with("__")),
    ]
}

fn tensor() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(0usize..5, 0..4).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(any::<u32>().prop_map(f32::from_bits), n).prop_map(move |data| Tensor::new(shape.clone(), data).unwrap())
    })
}

fn tensor_file() -> impl Strategy<Value = TensorFile> {
    (
        prop::collection::btree_map(name(), tensor(), 0..5),
        prop::collection::btree_map("[a-z]{1,6}", "[ -~]{0,10}", 0..3),
    )
        .prop_map(|(tensors, metadata)| TensorFile { tensors, metadata })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(600))]

    #[test]
    fn round_trip_is_bit_exact(file in tensor_file()) {
        let bytes = encode(&file).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert!(back.bit_eq(&file));
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn equal_maps_encode_identically(file in tensor_file()) {
        // rebuild in reverse insertion order
        let tensors: BTreeMap<_, _> = file.tensors.iter().rev().map(|(k, v)| (k.clone(), v.clone())).collect();
        let metadata: BTreeMap<_, _> = file.metadata.iter().rev().map(|(k, v)| (k.clone(), v.clone())).collect();
        let again = TensorFile { tensors, metadata };
        prop_assert_eq!(encode(&file).unwrap(), encode(&again).unwrap());
    }
}

#[test]
fn write_twice_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut file = TensorFile::default();
    file.tensors.insert("tokens".into(), Tensor::matrix(3, 2, vec![0.5, -1.0, 2.0, 3.5, -0.0, 1e-30]).unwrap());
    file.metadata.insert("grid".into(), "1x3".into());
    let (a, b) = (dir.path().join("a.svt"), dir.path().join("b.svt"));
    write_tensor_file(&a, &file).unwrap();
    write_tensor_file(&b, &file).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(read_tensor_file(&a).unwrap().bit_eq(&file));
}

/// Every byte of magic, length prefix and header replaced by each of the 255
/// other values. Returns (mutations tried, mutations accepted).
fn mutate_header(bytes: &[u8]) -> (usize, Vec<(usize, u8)>) {
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut tried = 0;
    let mut accepted = Vec::new();
    let mut buf = bytes.to_vec();
    for pos in 0..12 + header_len {
        let original = buf[pos];
        for v in 0..=255u8 {
            if v == original {
                continue;
            }
            buf[pos] = v;
            tried += 1;
            if decode(&buf).is_ok() {
                accepted.push((pos, v));
            }
        }
        buf[pos] = original;
    }
    (tried, accepted)
}

fn sample_files() -> Vec<TensorFile> {
    let mut full = TensorFile::default();
    full.tensors.insert("tokens".into(), Tensor::matrix(4, 3, (0..12).map(|v| v as f32 / 7.0).collect()).unwrap());
    full.tensors.insert("attention".into(), Tensor::matrix(1, 4, vec![0.1, 0.2, 0.3, 0.4]).unwrap());
    full.tensors.insert("mask".into(), Tensor::vector(vec![0.0, 1.0, 1.0, 0.0]));
    full.tensors.insert("empty".into(), Tensor::new(vec![0, 7], vec![]).unwrap());
    full.metadata.insert("grid".into(), "2x2".into());
    full.metadata.insert("source".into(), "post-encoder".into());
    let mut one = TensorFile::default();
    one.tensors.insert("a".into(), Tensor::vector(vec![1.0]));
    vec![TensorFile::default(), one, full]
}

#[test]
fn every_single_byte_header_mutation_is_rejected() {
    for file in sample_files() {
        let bytes = encode(&file).unwrap();
        let (tried, accepted) = mutate_header(&bytes);
        assert!(tried > 0);
        assert!(accepted.is_empty(), "accepted mutations (position, byte): {accepted:?}");
    }
}

#[test]
fn mutation_errors_are_typed() {
    let bytes = encode(&sample_files()[1]).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(decode(&bad), Err(TensorError::BadMagic)));
    let mut bad = bytes.clone();
    bad[8] ^= 1;
    assert!(matches!(decode(&bad), Err(TensorError::CorruptHeader(_))));
}

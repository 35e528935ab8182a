//! Files written by numpy's own `np.save` as the reference encoder.

use std::path::PathBuf;

use rema_core::dataset::npy::{encode, read_tensor, write_tensor, Dtype, NpyError};
use rema_core::Matrix;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn reads_reference_f32() {
    let t = read_tensor(data("f4_2x3.npy")).unwrap();
    assert_eq!(t.shape, (2, 3));
    assert_eq!(t.dtype, Dtype::F32);
    assert_eq!(t.matrix, Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap());
}

#[test]
fn reads_reference_f64() {
    let t = read_tensor(data("f8_3x2.npy")).unwrap();
    assert_eq!(t.dtype, Dtype::F64);
    assert_eq!(t.matrix, Matrix::from_rows(&[[-2.0, -0.5], [1.0, 2.5], [4.0, 5.5]]).unwrap());
}

#[test]
fn writer_output_is_byte_identical_to_reference() {
    for (name, dtype) in [("f4_2x3.npy", Dtype::F32), ("f8_3x2.npy", Dtype::F64)] {
        let reference = std::fs::read(data(name)).unwrap();
        let m = read_tensor(data(name)).unwrap().matrix;
        assert_eq!(encode(&m, dtype).unwrap(), reference, "{name}");
    }
}

#[test]
fn corrupted_reference_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = std::fs::read(data("f4_2x3.npy")).unwrap();
    bytes[0] = 0x92;
    let bad = dir.path().join("bad.npy");
    std::fs::write(&bad, &bytes).unwrap();
    assert!(matches!(read_tensor(&bad), Err(NpyError::BadMagic)));

    let full = std::fs::read(data("f4_2x3.npy")).unwrap();
    let short = dir.path().join("short.npy");
    std::fs::write(&short, &full[..full.len() - 4]).unwrap();
    assert!(matches!(read_tensor(&short), Err(NpyError::TruncatedPayload { expected: 24, got: 20 })));
}

#[test]
fn write_then_read_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let m = Matrix::from_rows(&[[0.1, -1e300], [f64::MIN_POSITIVE, 7.0]]).unwrap();
    let path = dir.path().join("m.npy");
    write_tensor(&m, &path, Dtype::F64).unwrap();
    assert_eq!(read_tensor(&path).unwrap().matrix, m);
    assert_eq!(std::fs::metadata(&path).unwrap().len() % 16, 0);
}

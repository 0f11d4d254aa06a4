use std::path::{Path, PathBuf};

use minibatch_sfl::data::load_idx;
use minibatch_sfl::Error;

fn images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x0803u32, count, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

fn labels(count: u32, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0x0801u32.to_be_bytes());
    out.extend_from_slice(&count.to_be_bytes());
    out.extend_from_slice(body);
    out
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

fn format_error_on(
    result: minibatch_sfl::Result<minibatch_sfl::data::Dataset>,
    expected: &Path,
) -> String {
    match result {
        Err(Error::Format { path, reason }) => {
            assert_eq!(path, expected);
            reason
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn reads_images_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(
        dir.path(),
        "img",
        &images(3, 2, 2, &[0, 255, 51, 102, 1, 2, 3, 4, 255, 255, 0, 0]),
    );
    let lab = write(dir.path(), "lab", &labels(3, &[7, 0, 2]));
    let ds = load_idx(&img, &lab).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.dim(), 4);
    assert_eq!(ds.labels().unwrap(), &[7, 0, 2]);
    assert_eq!(ds.classes(), Some(8));
    assert_eq!(ds.features().row(0), &[0.0, 1.0, 0.2, 0.4]);
}

#[test]
fn rejects_wrong_magic() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = images(1, 1, 1, &[9]);
    bytes[3] = 0x01;
    let img = write(dir.path(), "img", &bytes);
    let lab = write(dir.path(), "lab", &labels(1, &[0]));
    let reason = format_error_on(load_idx(&img, &lab), &img);
    assert!(reason.contains("magic"), "{reason}");

    let img = write(dir.path(), "img2", &images(1, 1, 1, &[9]));
    let lab = write(dir.path(), "lab2", &images(1, 1, 1, &[0]));
    format_error_on(load_idx(&img, &lab), &lab);
}

#[test]
fn rejects_truncated_bodies_and_headers() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(dir.path(), "img", &images(2, 2, 2, &[1, 2, 3, 4, 5]));
    let lab = write(dir.path(), "lab", &labels(2, &[0, 1]));
    format_error_on(load_idx(&img, &lab), &img);

    let img = write(dir.path(), "img2", &images(2, 1, 1, &[1, 2]));
    let lab = write(dir.path(), "lab2", &labels(2, &[0]));
    format_error_on(load_idx(&img, &lab), &lab);

    let img = write(dir.path(), "img3", &images(2, 1, 1, &[1, 2])[..10]);
    format_error_on(load_idx(&img, &lab), &img);
}

#[test]
fn rejects_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(dir.path(), "img", &images(2, 1, 1, &[1, 2]));
    let lab = write(dir.path(), "lab", &labels(3, &[0, 1, 1]));
    let reason = format_error_on(load_idx(&img, &lab), &lab);
    assert!(reason.contains("3 labels for 2 images"), "{reason}");
}

#[test]
fn rejects_empty_files_of_valid_shape() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(dir.path(), "img", &images(0, 28, 28, &[]));
    let lab = write(dir.path(), "lab", &labels(0, &[]));
    format_error_on(load_idx(&img, &lab), &img);
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let lab = write(dir.path(), "lab", &labels(1, &[0]));
    let err = load_idx(&dir.path().join("absent"), &lab).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err:?}");
}

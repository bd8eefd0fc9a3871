#![allow(dead_code)]

use std::path::PathBuf;

use memtrain_core::dataio::{load_mnist_dir, Dataset};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mnist-1k")
}

pub fn fixture() -> (Dataset, Dataset) {
    load_mnist_dir(&fixture_dir()).expect("fixture subset is committed")
}

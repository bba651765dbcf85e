#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tpg_cli::ExperimentConfig;
use tpg_core::model::{ModelConfig, Variant};

/// 8x8 grayscale clips and the tiny model: every command finishes in seconds.
pub fn tiny_config(root: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.run.dir = root.join("runs");
    c.run.checkpoint_every = 1;
    c.data.root = root.join("data");
    c.data.clips_per_class = 4;
    c.data.clip_length = 12;
    c.data.frame_size = 8;
    c.data.channels = 1;
    c.data.test_fraction = 0.25;
    c.model = ModelConfig::tiny();
    c.training.t_p = 3;
    c.training.seq_len = 6;
    c.training.epochs = 2;
    c.training.batch_size = 4;
    c.training.learning_rate = 1e-3;
    c.eval.horizon = 8;
    c.eval.k = 2;
    c.eval.clip_count = 4;
    c.eval.time_steps = vec![4, 6, 9, 11];
    c.eval.batch_size = 4;
    c.eval.variants = Variant::ALL.to_vec();
    c
}

pub fn write_config(cfg: &ExperimentConfig, path: &Path) -> PathBuf {
    std::fs::write(path, cfg.to_toml()).unwrap();
    path.to_path_buf()
}

pub fn tpg(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tpg"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

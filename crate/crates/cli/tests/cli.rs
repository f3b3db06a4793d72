use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_histo-adapt"))
}

fn run(dir: &Path, args: &[&str]) -> i32 {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SYNTH: &str = "n_slides_per_class = 3\npatches_per_slide_min = 4\npatches_per_slide_max = 5\nseed = 2\n";
const TRAIN: &str = "arch = desk\nsource_epochs = 2\nadapt_iterations = 2\nbatch_size = 8\npair_batch_size = 8\n";

fn checksums(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), &["evaluate", "--bogus"]), 2);
    assert_eq!(run(dir.path(), &["no-such-command"]), 2);
    assert_eq!(run(dir.path(), &["--help"]), 0);
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "synth.cfg", SYNTH);
    assert_eq!(run(dir.path(), &["synth", "--config", cfg.to_str().unwrap(), "--out", "data", "--domain", "source"]), 0);
    let code = run(
        dir.path(),
        &["evaluate", "--ckpt", "missing.ckpt", "--data", "data", "--mapper", "source", "--report", "r.txt"],
    );
    assert_eq!(code, 3);
}

#[test]
fn bad_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "no_such_key = 1\n");
    assert_eq!(run(dir.path(), &["synth", "--config", cfg.to_str().unwrap(), "--out", "d", "--domain", "source"]), 5);
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "synth.cfg", SYNTH);
    let c = cfg.to_str().unwrap();
    assert_eq!(run(dir.path(), &["synth", "--config", c, "--out", "a", "--domain", "target"]), 0);
    assert_eq!(run(dir.path(), &["synth", "--config", c, "--out", "b", "--domain", "target"]), 0);
    let (a, b) = (checksums(&dir.path().join("a")), checksums(&dir.path().join("b")));
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert!(dir.path().join("a.manifest.json").exists());
}

#[test]
fn full_pipeline_produces_reports_and_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "synth.cfg", SYNTH);
    write(d, "target.cfg", &SYNTH.replace("seed = 2", "seed = 9"));
    write(d, "train.cfg", TRAIN);
    let steps: Vec<Vec<&str>> = vec![
        vec!["synth", "--config", "synth.cfg", "--out", "src", "--domain", "source"],
        vec!["synth", "--config", "target.cfg", "--out", "tgt", "--domain", "target"],
        vec!["prepare", "--data", "tgt", "--ratio", "0.5", "--seed", "1", "--out", "tgt_split.txt"],
        vec!["train-source", "--data", "src", "--config", "train.cfg", "--out", "source.ckpt"],
        vec![
            "adapt", "--source-ckpt", "source.ckpt", "--source-data", "src", "--target-data", "tgt",
            "--target-split", "tgt_split.txt", "--mode", "adv", "--out", "adv.ckpt",
        ],
        vec![
            "adapt", "--source-ckpt", "source.ckpt", "--source-data", "src", "--target-data", "tgt",
            "--target-split", "tgt_split.txt", "--mode", "adv+siamese", "--out", "sia.ckpt",
        ],
        vec![
            "evaluate", "--ckpt", "source.ckpt", "--data", "tgt", "--mapper", "source", "--split", "tgt_split.txt",
            "--side", "test", "--report", "baseline.txt",
        ],
        vec![
            "evaluate", "--ckpt", "adv.ckpt", "--data", "tgt", "--mapper", "target", "--split", "tgt_split.txt",
            "--side", "test", "--report", "adv.txt",
        ],
        vec![
            "evaluate", "--ckpt", "sia.ckpt", "--data", "tgt", "--mapper", "target", "--split", "tgt_split.txt",
            "--side", "test", "--report", "sia.txt",
        ],
        vec!["compare", "--a", "adv.txt", "--b", "sia.txt", "--out", "cmp.txt"],
        vec!["report", "--baseline", "baseline.txt", "--adv", "adv.txt", "--adv-siamese", "sia.txt", "--out", "table.md"],
    ];
    for s in &steps {
        assert_eq!(run(d, s), 0, "{s:?}");
    }
    let slide_dir = fs::read_dir(d.join("tgt"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap();
    let slide = slide_dir.to_str().unwrap();
    assert_eq!(run(d, &["heatmap", "--ckpt", "sia.ckpt", "--slide", slide, "--out", "h.png", "--mapper", "target"]), 0);

    let table = fs::read_to_string(d.join("table.md")).unwrap();
    assert!(table.contains("| Method | Accuracy (%) |"), "{table}");
    for name in ["Baseline", "adv-only", "adv+siamese"] {
        assert!(table.contains(name), "{table}");
    }
    assert!(fs::read_to_string(d.join("adv.ckpt.log")).unwrap().lines().count() >= 2);
    assert!(fs::read_to_string(d.join("baseline.txt")).unwrap().starts_with("# evaluation report v1"));
    assert!(image::open(d.join("h.png")).is_ok());
    for out in ["source.ckpt", "adv.ckpt", "baseline.txt", "table.md", "h.png"] {
        let m = fs::read_to_string(d.join(format!("{out}.manifest.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m).unwrap();
        assert!(v["artifacts"].as_array().is_some_and(|a| !a.is_empty()), "{out}: {m}");
    }
}

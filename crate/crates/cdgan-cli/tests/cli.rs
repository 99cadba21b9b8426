//! End-to-end checks of the command-line surface.

use std::path::Path;
use std::process::{Command, Output};

fn cdgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdgan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY_TOY: &[&str] = &[
    "--dataset",
    "toy",
    "--set",
    "dataset.count=3",
    "--set",
    "dataset.size=32",
    "--set",
    "dataset.holdout=2",
];

#[test]
fn train_smoke_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = cdgan(
        &[
            &[
                "train",
                "--preset",
                "cdgan",
                "--profile",
                "test",
                "--epochs",
                "1",
                "--seed",
                "3",
                "--set",
                "train.checkpoint_every=1",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            TINY_TOY,
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = out_dir.join("checkpoints").join("epoch_0001.ckpt");
    assert!(ckpt.exists(), "checkpoint missing");
    assert!(out_dir.join("log.tsv").exists());
    assert!(out_dir.join("config.toml").exists());
}

#[test]
fn cyclegan_training_logs_zero_cd_terms() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = cdgan(
        &[
            &[
                "train",
                "--preset",
                "cyclegan",
                "--epochs",
                "1",
                "--seed",
                "3",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            TINY_TOY,
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let log = std::fs::read_to_string(out_dir.join("log.tsv")).unwrap();
    let mut lines = log.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let cd_a = header.iter().position(|c| *c == "cd_a").unwrap();
    let cd_b = header.iter().position(|c| *c == "cd_b").unwrap();
    for line in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[cd_a].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[cd_b].parse::<f64>().unwrap(), 0.0);
    }
}

#[test]
fn missing_dataset_root_exits_2_with_path() {
    let out = cdgan(&[
        "train",
        "--dataset",
        "/no/such/dataset.toml",
        "--epochs",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("/no/such/dataset.toml"), "{}", stderr(&out));
}

#[test]
fn unknown_preset_is_rejected() {
    let out = cdgan(&["train", "--preset", "wgan", "--dataset", "toy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("wgan"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let out = cdgan(
        &[
            &["train", "--epochs", "1", "--set", "train.bogus_knob=1"],
            TINY_TOY,
        ]
        .concat(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("bogus_knob"), "{}", stderr(&out));
}

#[test]
fn verify_only_runs_a_single_group() {
    let out = cdgan(&["verify", "--only", "schedule"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("[PASS] schedule/"), "{text}");
    assert!(!text.contains("losses/"), "{text}");
}

#[test]
fn train_eval_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = cdgan(
        &[
            &[
                "train",
                "--preset",
                "csgan",
                "--epochs",
                "1",
                "--seed",
                "9",
                "--set",
                "train.checkpoint_every=1",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            TINY_TOY,
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = out_dir.join("checkpoints").join("epoch_0001.ckpt");

    // eval on the toy holdout
    let report_path = dir.path().join("report.tsv");
    let out = cdgan(
        &[
            &[
                "eval",
                "--checkpoint",
                ckpt.to_str().unwrap(),
                "--out",
                report_path.to_str().unwrap(),
            ],
            TINY_TOY,
        ]
        .concat(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = std::fs::read_to_string(&report_path).unwrap();
    assert!(report.starts_with("id\tssim\tmse\tpsnr\tlpips"));
    assert!(report.lines().last().unwrap().starts_with("mean\t"));

    // infer a single image through the checkpoint
    let input_png = dir.path().join("input.png");
    write_test_png(&input_png);
    let output_png = dir.path().join("translated.png");
    let out = cdgan(&[
        "infer",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        input_png.to_str().unwrap(),
        "--output",
        output_png.to_str().unwrap(),
        "--direction",
        "a2b",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let translated = image::open(&output_png).unwrap();
    assert_eq!((translated.width(), translated.height()), (256, 256));
}

fn write_test_png(path: &Path) {
    let img = image::RgbImage::from_fn(40, 40, |x, y| {
        image::Rgb([(x * 6) as u8, (y * 6) as u8, 128])
    });
    img.save(path).unwrap();
}

#[test]
fn rerunning_a_train_config_reproduces_the_log_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = cdgan(
            &[
                &[
                    "train",
                    "--preset",
                    "cdgan",
                    "--epochs",
                    "1",
                    "--seed",
                    "11",
                    "--out",
                    out_dir.to_str().unwrap(),
                ],
                TINY_TOY,
            ]
            .concat(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        std::fs::read(out_dir.join("log.tsv")).unwrap()
    };
    assert_eq!(run("first"), run("second"));
}

#[test]
fn ablate_emits_the_nine_column_table() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_dir = dir.path().join("sweep");
    let ablate_args: Vec<&str> = vec![
        "ablate",
        "--epochs",
        "1",
        "--seed",
        "4",
        "--out",
        sweep_dir.to_str().unwrap(),
        "--dataset",
        "toy",
        "--set",
        "dataset.count=2",
        "--set",
        "dataset.size=32",
        "--set",
        "dataset.holdout=2",
    ];
    let out = cdgan(&ablate_args);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let header = text.lines().next().unwrap();
    let cols: Vec<&str> = header.split('\t').collect();
    assert_eq!(cols.len(), 10); // metric + 9 configurations
    assert_eq!(cols[1], "dualgan");
    assert_eq!(cols[2], "dualgan+");
    assert_eq!(cols[9], "cdgan");
    assert!(dir.path().join("sweep").join("ablation.tsv").exists());
    // identical seeds: rerunning reproduces the table byte for byte
    let saved = std::fs::read_to_string(dir.path().join("sweep").join("ablation.tsv")).unwrap();
    for (a, b) in text.lines().zip(saved.lines()) {
        assert_eq!(a, b);
    }
}

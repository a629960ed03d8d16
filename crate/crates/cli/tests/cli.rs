use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pigan_core::network::ModelParams;
use pigan_core::phantoms::Manifest;

fn pigan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pigan"))
        .args(args)
        .output()
        .expect("spawn pigan")
}

fn ok(args: &[&str]) -> Output {
    let out = pigan(args);
    assert!(
        out.status.success(),
        "pigan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    pigan(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn simulate(root: &Path, name: &str, domain: &str, seed: u64) -> PathBuf {
    let out = root.join(name);
    let seed = seed.to_string();
    ok(&[
        "simulate",
        "--domain",
        domain,
        "--n-train",
        "4",
        "--n-val",
        "2",
        "--n-test",
        "6",
        "--size",
        "32",
        "--coils",
        "2",
        "--seed",
        &seed,
        "--out",
        s(&out),
    ]);
    out
}

#[test]
fn simulate_echoes_config_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", "brainlike", 7);
    let b = simulate(dir.path(), "b", "brainlike", 7);
    let knee = simulate(dir.path(), "knee", "kneelike", 7);
    let (ma, mb, mk) = (manifest(&a), manifest(&b), manifest(&knee));
    assert_eq!((ma.counts.train, ma.counts.val, ma.counts.test), (4, 2, 6));
    assert_eq!(
        (ma.height, ma.width, ma.coils, ma.base_seed),
        (32, 32, 2, 7)
    );
    assert_eq!(ma.checksums, mb.checksums);
    let shared = ma
        .checksums
        .iter()
        .filter(|(k, v)| k.contains("image") && mk.checksums.get(*k) == Some(v))
        .count();
    assert_eq!(shared, 0);
}

#[test]
fn invalid_domain_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&[
            "simulate",
            "--domain",
            "lunglike",
            "--out",
            s(&dir.path().join("x"))
        ]),
        2
    );
    assert_eq!(code(&["pretrain", "--data", s(dir.path())]), 2);
}

#[test]
fn training_commands_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "data", "brainlike", 1);
    let pre = dir.path().join("pre");
    ok(&[
        "pretrain",
        "--data",
        s(&data),
        "--out",
        s(&pre),
        "--af",
        "4",
        "--acs",
        "4",
        "--epochs",
        "2",
        "--batch",
        "2",
        "--width",
        "4",
        "--bottleneck",
        "2",
        "--checkpoints",
        "1,2",
    ]);
    let best = pre.join("best.pgn1");
    let (_, header) = ModelParams::load(&best).unwrap();
    assert_eq!((header.state.af, header.state.acs), (4.0, 4));
    for f in [
        "last.pgn1",
        "epoch_0001.pgn1",
        "epoch_0002.pgn1",
        "report.csv",
        "report.json",
    ] {
        assert!(pre.join(f).is_file(), "{f}");
    }
    let csv = std::fs::read_to_string(pre.join("report.csv")).unwrap();
    assert!(csv.starts_with("epoch,lr,L_GEN,L_iMAE,L_fMAE_M,L_fMAE_notM,L_DISC,val_PSNR\n"));
    assert_eq!(csv.lines().count(), 3);

    // a rerun is bit-identical
    let again = dir.path().join("again");
    ok(&[
        "pretrain",
        "--data",
        s(&data),
        "--out",
        s(&again),
        "--af",
        "4",
        "--acs",
        "4",
        "--epochs",
        "2",
        "--batch",
        "2",
        "--width",
        "4",
        "--bottleneck",
        "2",
        "--checkpoints",
        "1,2",
    ]);
    for f in ["best.pgn1", "last.pgn1", "report.csv", "report.json"] {
        assert_eq!(
            std::fs::read(pre.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }

    // zero-epoch fine-tune reproduces its input byte for byte
    let zero = dir.path().join("zero");
    ok(&[
        "finetune",
        "--data",
        s(&data),
        "--init",
        s(&best),
        "--epochs",
        "0",
        "--out",
        s(&zero),
    ]);
    assert_eq!(
        std::fs::read(&best).unwrap(),
        std::fs::read(zero.join("best.pgn1")).unwrap()
    );

    let tuned = dir.path().join("tuned");
    ok(&[
        "finetune",
        "--data",
        s(&data),
        "--init",
        s(&best),
        "--epochs",
        "2",
        "--acs",
        "4",
        "--out",
        s(&tuned),
    ]);
    assert!(tuned.join("epoch_0001.pgn1").is_file() && tuned.join("epoch_0002.pgn1").is_file());

    assert_eq!(
        code(&[
            "finetune",
            "--data",
            s(&data),
            "--epochs",
            "1",
            "--out",
            s(&tuned)
        ]),
        2
    );

    // init built for another width
    let wide = dir.path().join("wide");
    ok(&[
        "pretrain",
        "--data",
        s(&data),
        "--out",
        s(&wide),
        "--epochs",
        "0",
        "--width",
        "8",
        "--bottleneck",
        "2",
    ]);
    let out = pigan(&[
        "pretrain",
        "--data",
        s(&data),
        "--init",
        s(&wide.join("best.pgn1")),
        "--out",
        s(&dir.path().join("w2")),
        "--epochs",
        "1",
        "--acs",
        "4",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "same-architecture init is accepted"
    );
    let knee4 = dir.path().join("c3");
    ok(&[
        "simulate",
        "--domain",
        "kneelike",
        "--n-train",
        "2",
        "--n-val",
        "1",
        "--n-test",
        "1",
        "--size",
        "32",
        "--coils",
        "3",
        "--out",
        s(&knee4),
    ]);
    let out = pigan(&[
        "finetune",
        "--data",
        s(&knee4),
        "--init",
        s(&best),
        "--epochs",
        "1",
        "--acs",
        "4",
        "--out",
        s(&dir.path().join("bad")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coils"));
    let corrupt = dir.path().join("corrupt.pgn1");
    let mut bytes = std::fs::read(&best).unwrap();
    let at = bytes
        .windows(13)
        .position(|w| w == b"g.enc1.down.w")
        .unwrap();
    bytes[at + 7] = b'l';
    std::fs::write(&corrupt, &bytes).unwrap();
    let out = pigan(&[
        "finetune",
        "--data",
        s(&data),
        "--init",
        s(&corrupt),
        "--epochs",
        "1",
        "--out",
        s(&dir.path().join("bad2")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("g.enc1"));

    // non-finite weights trip the divergence guard
    let (mut p, h) = ModelParams::load(&best).unwrap();
    p.get_mut("d.l7.b").unwrap().data_mut()[0] = f64::NAN;
    let nan = dir.path().join("nan.pgn1");
    p.save(&nan, h.state).unwrap();
    assert_eq!(
        code(&[
            "finetune",
            "--data",
            s(&data),
            "--init",
            s(&nan),
            "--epochs",
            "1",
            "--acs",
            "4",
            "--out",
            s(&dir.path().join("nan"))
        ]),
        4
    );
}

#[test]
fn reconstruct_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "data", "tumorlike", 3);
    let recon = |method: &str, af: &str, acs: &str, name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "reconstruct",
            "--data",
            s(&data),
            "--method",
            method,
            "--af",
            af,
            "--acs",
            acs,
            "--out",
            s(&out),
        ]);
        out
    };
    let truth = recon("truth", "4", "4", "truth");
    let full = recon("zf", "1", "4", "full");
    for i in manifest(&data).indices.test {
        let name = format!("test_{i}.pgm");
        assert_eq!(
            std::fs::read(truth.join(&name)).unwrap(),
            std::fs::read(full.join(&name)).unwrap(),
            "{name}"
        );
    }
    let zf = recon("zf", "4", "4", "zf");
    let cg = recon("cgsense", "4", "4", "cg");
    assert_eq!(
        code(&[
            "reconstruct",
            "--data",
            s(&data),
            "--method",
            "gan",
            "--out",
            s(&dir.path().join("g"))
        ]),
        2
    );

    let eval = |dirs: &[&Path], name: &str, extra: &[&str]| -> serde_json::Value {
        let out = dir.path().join(name);
        let mut args = vec!["evaluate"];
        for d in dirs {
            args.extend(["--recon-dir", s(d)]);
        }
        args.extend(["--gt-manifest", s(&data), "--out", s(&out)]);
        args.extend(extra);
        ok(&args);
        serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap()
    };
    let mean_psnr = |v: &serde_json::Value, k: usize| {
        v["methods"][k]["report"]["psnr"]["mean"].as_f64().unwrap()
    };

    let e = eval(&[&cg, &zf], "cg_vs_zf", &[]);
    assert!(
        mean_psnr(&e, 0) > mean_psnr(&e, 1),
        "{} vs {}",
        mean_psnr(&e, 0),
        mean_psnr(&e, 1)
    );
    assert!(dir.path().join("cg_vs_zf/paired.csv").is_file());

    let e = eval(&[&truth, &truth], "self", &["--dataset-roi"]);
    for img in e["methods"][0]["report"]["images"].as_array().unwrap() {
        assert_eq!(img["ssim"].as_f64(), Some(1.0));
        assert_eq!(img["nrmse"].as_f64(), Some(0.0));
        assert_eq!(img["psnr"].as_str(), Some("inf"));
    }
    for (_, p) in e["p_values"].as_object().unwrap() {
        assert_eq!(p.as_f64(), Some(1.0));
    }
    let csv = std::fs::read_to_string(dir.path().join("self/metrics_0.csv")).unwrap();
    assert!(csv.starts_with("index,psnr,ssim,nrmse,kurtosis,skewness\n"));

    std::fs::remove_file(zf.join(format!("test_{}.pgm", manifest(&data).indices.test[1]))).unwrap();
    let out = pigan(&[
        "evaluate",
        "--recon-dir",
        s(&zf),
        "--gt-manifest",
        s(&data),
        "--out",
        s(&dir.path().join("m")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing indices"));
}

#[test]
fn recipe_files_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes");
    for name in ["tumor-transfer", "anatomy-transfer", "af-transfer"] {
        let r = pigan_cli::ExperimentRecipe::load(root.join(format!("{name}.json"))).unwrap();
        assert_eq!(serde_json::to_value(r.scenario).unwrap(), name);
        assert_eq!(r.seeds, vec![0, 1, 2]);
    }
}

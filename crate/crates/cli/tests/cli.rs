use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_consdepth")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {line}"))
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("seq");
    let mut args = vec!["synth", "--out", out.to_str().unwrap(), "--frames", "5", "--width", "96", "--height", "48"];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.txt")
}

#[test]
fn tcm_of_perfect_predictions_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &[]);
    let o = run(&["tcm", "--manifest", m.to_str().unwrap(), "--frames", "3"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.starts_with("schema=1 command=tcm k=3 "));
    assert_eq!(field(&out, "abs_err"), "0.000000");
    assert_eq!(field(&out, "rmse"), "0.000000");
}

#[test]
fn tcm_grows_with_noise_and_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &["--noise", "0.1", "--seed", "3"]);
    let o = run(&["tcm", "--manifest", m.to_str().unwrap(), "--frames", "3,5", "--table"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert!(field(lines[0], "abs_err").parse::<f64>().unwrap() > 0.001);
    assert_eq!(field(lines[1], "k"), "5");
    assert!(out.contains("Abs Err"));
}

#[test]
fn gradcheck_geometric_is_accurate() {
    let o = run(&["gradcheck", "--loss", "geometric", "--size", "8", "--seed", "7"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(field(&out, "max_rel_err").parse::<f64>().unwrap() < 1e-4);
    assert_eq!(run(&["gradcheck"]).stdout.split(|&b| b == b'\n').filter(|l| !l.is_empty()).count(), 5);
}

#[test]
fn warp_losses_attn_and_fuse_run_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let m = synth(dir.path(), &[]);
    let m = m.to_str().unwrap();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();

    let o = run(&["warp", "--manifest", m, "--target", "2", "--source", "1", "--out-dir", out_s]);
    assert!(o.status.success());
    let w = stdout(&o);
    assert!(field(&w, "mae").parse::<f64>().unwrap() < 0.02);
    assert!(Path::new(field(&w, "image")).exists() && Path::new(field(&w, "mask")).exists());

    let o = run(&["losses", "--manifest", m, "--target", "2"]);
    assert!(o.status.success());
    let l = stdout(&o);
    assert_eq!(field(&l, "sources"), "1,3");
    // Predictions equal ground truth, so the depth-only terms vanish.
    assert_eq!(field(&l, "geometric"), "0.000000");
    assert_eq!(field(&l, "reference"), "0.000000");

    let o = run(&["attn", "--manifest", m, "--target", "2", "--scale", "4", "--query", "3,2", "--out-dir", out_s]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let a = stdout(&o);
    assert_eq!((field(&a, "coarse_width"), field(&a, "coarse_height")), ("24", "12"));
    let pgm = std::fs::read(field(&a, "spatial_map")).unwrap();
    assert!(pgm.starts_with(b"P5\n24 12\n255\n"));

    let ply = dir.path().join("cloud.ply");
    let o = run(&["fuse", "--manifest", m, "--reference", "2", "--stride", "2", "--out", ply.to_str().unwrap()]);
    assert!(o.status.success());
    let n: usize = field(&stdout(&o), "points").parse().unwrap();
    assert_eq!(n, 5 * 48 * 24);
    let text = std::fs::read_to_string(&ply).unwrap();
    assert!(text.contains(&format!("element vertex {n}\n")));
}

#[test]
fn outputs_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = synth(a.path(), &["--noise", "0.05", "--seed", "9", "--trajectory", "wander"]);
    let mb = synth(b.path(), &["--noise", "0.05", "--seed", "9", "--trajectory", "wander"]);
    for name in ["manifest.txt", "poses.txt", "pred_0003.pfm", "gt_0001.pfm", "image_0004.png"] {
        let (x, y) = (std::fs::read(a.path().join("seq").join(name)).unwrap(), std::fs::read(b.path().join("seq").join(name)).unwrap());
        assert!(x == y, "{name} differs");
    }
    let ta = run(&["tcm", "--manifest", ma.to_str().unwrap(), "--frames", "3,5"]);
    let tb = run(&["tcm", "--manifest", mb.to_str().unwrap(), "--frames", "3,5"]);
    assert_eq!(ta.stdout, tb.stdout);
}

#[test]
fn exit_codes() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));

    let o = run(&["tcm"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--manifest"));

    let o = run(&["gradcheck", "--loss", "nope"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--loss"));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.txt");
    let o = run(&["tcm", "--manifest", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.txt"));

    let m = synth(dir.path(), &[]);
    let o = run(&["tcm", "--manifest", m.to_str().unwrap(), "--outlier-fraction", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--outlier-fraction"));

    std::fs::write(dir.path().join("seq").join("pred_0002.pfm"), b"Pf\n96 48\n-1.0\n\0\0").unwrap();
    let o = run(&["tcm", "--manifest", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr).to_string();
    assert!(err.contains("pred_0002.pfm") && err.contains("frame 2"), "{err}");
}

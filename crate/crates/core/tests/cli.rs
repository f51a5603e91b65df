use std::fs;
use std::path::Path;

use vltrack::bench::dataset::{read_boxes, write_boxes};
use vltrack::seqtok::BBox;

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("vltrack").chain(args.iter().copied());
    let code = vltrack::cli::main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.strip_prefix(dir).unwrap().display().to_string();
        if path.is_dir() {
            out.extend(tree(&path).into_iter().map(|(n, b)| (format!("{name}/{n}"), b)));
        } else {
            out.push((name, fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

const TINY: [&str; 12] = [
    "--set", "channels=16", "--set", "model_dim=16", "--set", "visual_layers=1",
    "--set", "decoder_layers=1", "--set", "bins=20", "--set", "batch_size=2",
];

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let (code, _, err) = run(&["gen-data", "--out", p(d), "--num", "8", "--seed", "7", "--difficulty", "easy", "--length", "5"]);
        assert_eq!(code, 0, "{err}");
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.len(), 8 * (5 + 3));
    assert!(ta.iter().any(|(n, _)| n == "seq_0000/frame_000000.ppm"));
    assert!(ta.iter().any(|(n, _)| n == "seq_0007/meta.json"));
    assert_eq!(ta, tb);
}

#[test]
fn eval_of_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("boxes.txt");
    write_boxes(&f, &[BBox::from_xywh(1.0, 2.0, 10.0, 12.0), BBox::from_xywh(4.5, 3.0, 8.0, 8.0)]).unwrap();
    let report = dir.path().join("report");
    let (code, out, err) = run(&["eval", "--pred", p(&f), "--gt", p(&f), "--out", p(&report)]);
    assert_eq!(code, 0, "{err}");
    let auc = 20.0 / 21.0;
    assert!(out.contains(&format!("success_auc={auc:.6}")), "{out}");
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    assert!((json["success_auc"].as_f64().unwrap() - auc).abs() < 1e-15);
    let csv = fs::read_to_string(report.join("curves.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    assert!(csv.starts_with("threshold,success_rate\n"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["no-such-command"]).0, 2);
    assert_eq!(run(&["gen-data"]).0, 2);
    assert_eq!(run(&["gradcheck", "--bogus-flag"]).0, 2);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("gen-data") && out.contains("bench-speed"));
}

#[test]
fn runtime_errors_exit_one_with_diagnostic() {
    let (code, _, err) = run(&["gradcheck", "--set", "colour=red"]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error:") && err.contains("colour"), "{err}");
    let (code, _, err) = run(&["eval", "--pred", "/nonexistent/p.txt", "--gt", "/nonexistent/g.txt"]);
    assert_eq!(code, 1);
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn gradcheck_passes_on_small_model() {
    let mut args = vec!["gradcheck", "--per-param", "1"];
    args.extend(TINY);
    let (code, out, err) = run(&args);
    assert_eq!(code, 0, "{out}{err}");
    assert!(out.contains("max_relative_error=") && out.trim_end().ends_with("PASS"), "{out}");
}

#[test]
fn train_track_eval_and_checkpoint_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(run(&["gen-data", "--out", p(&data), "--num", "3", "--length", "4"]).0, 0);

    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny run\nsteps = 2\nwarmup_steps = 1\nbins = 30\n").unwrap();
    let ckpt = dir.path().join("model.mmtk");
    let mut args = vec!["train", "--data", p(&data), "--out", p(&ckpt), "--config", p(&cfg), "--log-every", "1"];
    // --set beats the file
    args.extend(TINY);
    let (code, out, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    assert!(out.lines().count() >= 2, "{out}");

    let seq = data.join("seq_0001");
    let pred = dir.path().join("pred.txt");
    let (code, _, err) = run(&["track", "--checkpoint", p(&ckpt), "--sequence", p(&seq), "--out", p(&pred)]);
    assert_eq!(code, 0, "{err}");
    let boxes = read_boxes(&pred).unwrap();
    let gt = read_boxes(&seq.join("groundtruth.txt")).unwrap();
    assert_eq!(boxes.len(), 4);
    assert_eq!(boxes[0], gt[0]);

    let (code, out, err) = run(&["eval", "--checkpoint", p(&ckpt), "--data", p(&data)]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("success_auc="));

    let (code, _, err) = run(&["track", "--checkpoint", p(&ckpt), "--sequence", p(&seq), "--out", p(&pred), "--preset", "full"]);
    assert_eq!(code, 1);
    assert!(err.contains("shape") || err.contains("tensor"), "{err}");

    let (code, out, err) = run(&["bench-speed", "--checkpoint", p(&ckpt), "--frames", "3"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("frames_per_sec="));
}

use std::fs;
use std::path::Path;

use spanparse::cli::{run, EXIT_DATA, EXIT_USAGE};
use spanparse::toy::{toy_treebank, ToyLanguage};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn spanparse(args: &[&str], stdin: &str) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("spanparse").chain(args.iter().copied());
    let code = run(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn fixture(name: &str) -> String {
    format!("{FIXTURES}/{name}")
}

fn train_toy(dir: &Path) -> String {
    let train = dir.join("a.mrg");
    fs::write(&train, toy_treebank(ToyLanguage::A, 8, 1).to_bracketed()).unwrap();
    let conf = dir.join("run.conf");
    fs::write(&conf, format!("{}max_len = 16\n", fs::read_to_string(fixture("example.conf")).unwrap())).unwrap();
    let model = dir.join("a.spck");
    let t = train.to_str().unwrap();
    let r = spanparse(
        &[
            "train",
            "--config",
            conf.to_str().unwrap(),
            "--lang",
            "a",
            "--train",
            t,
            "--dev",
            t,
            "--seed",
            "4",
            "--output",
            model.to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stderr.contains("# epochs=3"));
    assert!(r.stderr.contains("# seed=4"));
    assert!(!r.stderr.contains("# seed=11"));
    assert_eq!(r.stdout.lines().filter(|l| l.starts_with("step=")).count(), 3);
    model.to_str().unwrap().to_string()
}

#[test]
fn train_parse_and_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_toy(dir.path());
    let mut input = fs::read_to_string(fixture("sentences.txt")).unwrap();
    input.push_str(&"the cat ".repeat(10));
    input.push('\n');

    let parsed = spanparse(&["parse", "--model", &model, "--lang", "a"], &input);
    assert_eq!(parsed.code, 0, "{}", parsed.stderr);
    let lines: Vec<&str> = parsed.stdout.lines().collect();
    assert_eq!(lines.len(), 5);
    // the 20-word sentence exceeds max_len and falls back to a flat tree
    assert_eq!(parsed.stderr.matches("warning:").count(), 1);
    assert!(lines[4].starts_with("(TOP (XX the) (XX cat)"));
    assert!(parsed.stderr.contains("warning: line 5:"));

    let four = [model.as_str(); 4].join(",");
    let ens = spanparse(&["ensemble", "--models", &four, "--lang", "a"], &input);
    assert_eq!(ens.code, 0, "{}", ens.stderr);
    assert_eq!(ens.stdout, parsed.stdout);

    let ided = spanparse(&["parse", "--model", &model, "--lang", "a"], "s7\tthe cat sees a dog\n");
    assert_eq!(ided.stdout.lines().next(), lines.first().copied());

    assert_eq!(spanparse(&["parse", "--model", &model, "--lang", "zz"], &input).code, EXIT_USAGE);
}

#[test]
fn evaluate_and_significance() {
    let (g, p) = (fixture("eval_gold.mrg"), fixture("eval_pred.mrg"));
    let r = spanparse(&["evaluate", &g, &p], "");
    assert_eq!(r.code, 0);
    assert!(r.stdout.starts_with("P=50.00 R=50.00 F1=50.00"), "{}", r.stdout);
    let r = spanparse(&["evaluate", &g, &g], "");
    assert!(r.stdout.contains("F1=100.00"));
    let r = spanparse(&["significance", &g, &g, &g, "--resamples", "200"], "");
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("p=1.0000"));
    assert_eq!(spanparse(&["evaluate", &g, "/nonexistent.mrg"], "").code, EXIT_DATA);
}

#[test]
fn usage_errors() {
    assert_eq!(spanparse(&["frobnicate"], "").code, EXIT_USAGE);
    assert_eq!(spanparse(&["train", "--lang", "a"], "").code, EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "colour = blue\n").unwrap();
    let r = spanparse(&["evaluate", "--config", conf.to_str().unwrap(), "a", "b"], "");
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.stderr.contains("colour"));
    assert_eq!(spanparse(&["--help"], "").code, 0);
}

#[test]
fn inspect_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.ctx");
    let mut b = b"CTXV1\0".to_vec();
    for v in [1u32, 2, 1] {
        b.extend(v.to_le_bytes());
    }
    b.extend(2u16.to_le_bytes());
    b.extend(b"s1");
    for v in [3u32, 2, 1, 2] {
        b.extend(v.to_le_bytes());
    }
    for x in [0.5f32, 1.0, -1.0, 2.0, 0.0, 0.25] {
        b.extend(x.to_le_bytes());
    }
    fs::write(&path, &b).unwrap();
    let r = spanparse(&["inspect-vectors", path.to_str().unwrap()], "");
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.stdout.trim(), "format=CTXV1 count=1 dim=2 subwords=3 words=2");

    fs::write(&path, &b[..b.len() - 3]).unwrap();
    assert_eq!(spanparse(&["inspect-vectors", path.to_str().unwrap()], "").code, EXIT_DATA);

    let r = spanparse(&["inspect-vectors", &fixture("static_vectors.txt")], "");
    assert_eq!(r.stdout.trim(), "format=static count=4 dim=3");
}

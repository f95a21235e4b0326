use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const ECHO_TEMPLATE: &str =
    r#"awk -F'\t' '{n=split(" "$1,a," <sep> "); out=a[2]" <sep> "a[3]; gsub(/<X_/,"<Y_",out); print out}'"#;

fn ctmt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctmt")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&ctmt(&[])), 1);
    assert_eq!(code(&ctmt(&["frobnicate"])), 1);
    assert_eq!(code(&ctmt(&["--shards", "0", "roundtrip", "--synthetic", "5"])), 1);
    assert_eq!(code(&ctmt(&["roundtrip"])), 1);
    assert_eq!(code(&ctmt(&["--help"])), 0);
}

#[test]
fn data_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let src = write(tmp.path(), "a.src", "a b\nc d\n");
    let tgt = write(tmp.path(), "a.tgt", "x y\n");
    let out = ctmt(&["prepare", "--src", &src, "--tgt", &tgt, "--out", p(tmp.path())]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let missing = tmp.path().join("nope.src");
    assert_eq!(code(&ctmt(&["encode", "--src", p(&missing), "--out", p(tmp.path())])), 2);

    let bad = write(tmp.path(), "bad.jsonl", "{not json\n");
    let src = write(tmp.path(), "b.src", "a b\n");
    assert_eq!(code(&ctmt(&["encode", "--src", &src, "--constraints", &bad, "--out", p(tmp.path())])), 2);
}

#[test]
fn roundtrip_reports_perfect_scores() {
    for mode in ["lexical", "structural"] {
        let out = ctmt(&["--mode", mode, "--shards", "2", "roundtrip", "--synthetic", "300"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let report = stdout_json(&out);
        assert_eq!(report["template_accuracy"], 100.0);
        assert_eq!(report["metrics"]["bleu"], 100.0);
        assert_eq!(report["breaches"].as_array().unwrap().len(), 0);
    }
}

#[test]
fn bench_reports_cost_ratio() {
    let out = ctmt(&["bench", "--synthetic", "200"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = stdout_json(&out);
    assert!(report["reconstruct_cost_ratio"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["within_budget"], true);
}

/// prepare → encode → decode through an echo translator → evaluate.
#[test]
fn file_pipeline_with_translator_bridge() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let src = write(dir, "test.src", "the price hike slowed\nno constraints here\n");
    let tgt = write(dir, "test.tgt", "价格上涨 放缓\n这里 没有\n");
    let cons = write(
        dir,
        "cons.jsonl",
        "{\"constraints\": [{\"src\": \"price hike\", \"tgt\": \"价格上涨\"}]}\n{\"constraints\": []}\n",
    );

    let work = dir.join("work");
    let out = ctmt(&["encode", "--src", &src, "--constraints", &cons, "--out", p(&work)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["encoded"], 2);
    let xprime = fs::read_to_string(work.join("test.xprime")).unwrap();
    let first = xprime.lines().next().unwrap();
    assert_eq!(
        first,
        "<C_1> price hike <sep> <X_0> <C_1> <X_1> <sep> <X_0> the <X_1> slowed"
    );
    let prefix = fs::read_to_string(work.join("test.prefix")).unwrap();
    assert_eq!(prefix.lines().next().unwrap(), "<C_1> 价格上涨 <sep>");

    let hyp = dir.join("test.hyp");
    let audit = dir.join("audit.jsonl");
    let out = ctmt(&[
        "--translator",
        ECHO_TEMPLATE,
        "--shards",
        "2",
        "decode",
        "--work",
        p(&work),
        "--out",
        p(&hyp),
        "--audit",
        p(&audit),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["lines"], 2);
    assert_eq!(summary["template_accuracy"], 100.0);
    let hyps = fs::read_to_string(&hyp).unwrap();
    let hyps: Vec<&str> = hyps.lines().collect();
    // the echo keeps source words but puts the constraint target in its slot
    assert_eq!(hyps, ["the 价格上涨 slowed", "no constraints here"]);
    assert_eq!(fs::read_to_string(&audit).unwrap().lines().count(), 2);

    let table = dir.join("scores.tsv");
    let report_path = dir.join("report.json");
    let out = ctmt(&[
        "evaluate",
        "--hyp",
        p(&hyp),
        "--ref",
        &tgt,
        "--constraints",
        &cons,
        "--out",
        p(&report_path),
        "--per-sentence",
        p(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["sentences"], 2);
    assert_eq!(report["constraints"], 1);
    assert_eq!(report["exact_match"], 100.0);
    let rows = fs::read_to_string(&table).unwrap();
    let rows: Vec<&str> = rows.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("line\tbleu\texact_match"));
    assert!(rows[1].starts_with("1\t"));
    assert!(rows[2].split('\t').nth(2) == Some("-"));
}

#[test]
fn decode_from_outputs_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let src = write(dir, "test.src", "a b c d\n");
    let cons = write(dir, "cons.jsonl", "{\"constraints\": [{\"src\": \"b\", \"tgt\": \"B\"}, {\"src\": \"d\", \"tgt\": \"D\"}]}\n");
    let work = dir.join("w");
    assert_eq!(code(&ctmt(&["encode", "--src", &src, "--constraints", &cons, "--out", p(&work)])), 0);
    let outputs = write(dir, "model.out", "<Y_0> <C_2> <Y_1> <C_1> <Y_2> <sep> <Y_0> x <Y_1> y <Y_2> z\n");
    let out = ctmt(&["decode", "--work", p(&work), "--outputs", &outputs]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(work.join("test.hyp")).unwrap(), "x D y B z\n");

    let short = write(dir, "short.out", "");
    assert_eq!(code(&ctmt(&["decode", "--work", p(&work), "--outputs", &short])), 2);
    assert_eq!(code(&ctmt(&["decode", "--work", p(&work)])), 1);
}

#[test]
fn failing_translator_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let src = write(tmp.path(), "test.src", "a b\n");
    let work = tmp.path().join("w");
    assert_eq!(code(&ctmt(&["encode", "--src", &src, "--out", p(&work)])), 0);
    let out = ctmt(&["--translator", "exit 3", "decode", "--work", p(&work)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn sample_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let src = write(dir, "s", "a b c d e\nf g h\n");
    let tgt = write(dir, "t", "A B C D E\nH G F\n");
    let align = write(dir, "al", "0-0 1-1 2-2 3-3 4-4\n0-2 1-1 2-0\n");
    let run = |seed: &str, shards: &str, out: &Path| {
        let o = ctmt(&[
            "--seed", seed, "--shards", shards, "sample", "--src", &src, "--tgt", &tgt, "--align", &align, "--out", p(out),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (
            fs::read(out.join("cons.jsonl")).unwrap(),
            fs::read(out.join("spans.jsonl")).unwrap(),
        )
    };
    let a = run("7", "1", &dir.join("a"));
    let b = run("7", "2", &dir.join("b"));
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a.0).unwrap().lines().count(), 2);

    let bad = ctmt(&["sample", "--src", &src, "--tgt", &tgt, "--align", &align, "--min-len", "4", "--max-len", "2"]);
    assert_eq!(code(&bad), 1);
}

#[test]
fn prepare_uses_sampled_spans() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let src = write(dir, "s", "a b a\n");
    let tgt = write(dir, "t", "X Y X\n");
    let align = write(dir, "al", "0-2 1-1 2-0\n");
    let out = dir.join("o");
    assert_eq!(
        code(&ctmt(&["sample", "--src", &src, "--tgt", &tgt, "--align", &align, "--out", p(&out), "--max-constraints", "1", "--max-len", "1"])),
        0
    );
    let cons = out.join("cons.jsonl");
    let spans = out.join("spans.jsonl");
    let o = ctmt(&[
        "prepare", "--src", &src, "--tgt", &tgt, "--constraints", p(&cons), "--spans", p(&spans), "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout_json(&o)["prepared"], 1);
    let xprime = fs::read_to_string(out.join("train.xprime")).unwrap();
    let yprime = fs::read_to_string(out.join("train.yprime")).unwrap();
    assert!(xprime.starts_with("<C_1> "), "{xprime}");
    assert!(yprime.contains("<sep> <Y_0>"), "{yprime}");
}

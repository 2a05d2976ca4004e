use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fastsubs"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn help_and_version_exit_zero() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("subs"));
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["subs", "--model", "m"])), 1);
    let model = data("toy.arpa");
    let input = data("corpus.txt");
    let o = run(&[
        "subs",
        "--model",
        model.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "-k",
        "0",
    ]);
    assert_eq!(code(&o), 1);
    assert!(o.stdout.is_empty());
}

#[test]
fn io_and_parse_errors_exit_two() {
    let input = data("corpus.txt");
    let o = run(&[
        "subs",
        "--model",
        "/nonexistent/model.arpa",
        "--input",
        input.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.arpa"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.arpa");
    std::fs::write(&bad, "\\data\\\nngram 1=2\n\n\\1-grams:\n-1\ta\n\\end\\\n").unwrap();
    let o = run(&[
        "subs",
        "--model",
        bad.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn check_modes() {
    let model = data("toy.arpa");
    let corpus = data("corpus.txt");
    let base = [
        "check",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
    ];

    let o = run(&[&base[..], &["--sample", "all", "--k", "1,2,all"]].concat());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).ends_with("mismatches 0\n"));

    let o = run(&[&base[..], &["--sample", "0"]].concat());
    assert_eq!(code(&o), 0);
    assert_eq!(
        String::from_utf8_lossy(&o.stdout),
        "queries 0\ncomparisons 0\nmismatches 0\n"
    );

    let o = run(&[&base[..], &["--sample", "all", "--inject-fault"]].concat());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("mismatches 1"));
}

#[test]
fn synth_then_subs_and_bench() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    let model = dir.path().join("model.arpa");
    let o = run(&[
        "synth",
        "--vocab",
        "120",
        "--tokens",
        "3000",
        "--order",
        "3",
        "--seed",
        "5",
        "--corpus-out",
        corpus.to_str().unwrap(),
        "--model-out",
        model.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&corpus).unwrap();
    let first: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
    let input = dir.path().join("input.txt");
    std::fs::write(&input, first + "\n").unwrap();

    let subs = |extra: &[&str]| {
        let o = run(&[
            &[
                "subs",
                "--model",
                model.to_str().unwrap(),
                "--input",
                input.to_str().unwrap(),
                "-k",
                "5",
            ][..],
            extra,
        ]
        .concat());
        assert_eq!(code(&o), 0);
        o.stdout
    };
    let fast = subs(&[]);
    assert!(!fast.is_empty());
    assert_eq!(fast, subs(&["--oracle"]));
    assert_eq!(fast, subs(&["--threads", "3"]));

    let o = run(&[
        "bench",
        "--model",
        model.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--k",
        "1,4,16",
        "--sample",
        "10",
    ]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let rows = out.lines().skip(1).filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 30);

    let o = run(&[
        "synth",
        "--vocab",
        "2",
        "--corpus-out",
        "x",
        "--model-out",
        "y",
    ]);
    assert_eq!(code(&o), 1);
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn volcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volcast"))
        .args(args)
        .env_remove("VOLCAST_SEED")
        .output()
        .expect("spawn volcast")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn assert_header(text: &str, seed: u64) {
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# volcast "), "{first}");
    assert!(first.contains("config_hash="), "{first}");
    assert!(first.ends_with(&format!("seed={seed}")), "{first}");
}

#[test]
fn ingest_prices_returns_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("px.csv");
    fs::write(
        &prices,
        "date,close\n2020-01-02,100\n2020-01-03,101\n2020-01-06,NA\n2020-01-07,99.5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = volcast(&["ingest", s(&prices), "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = read(&out.join("manifest.csv"));
    assert_header(&manifest, 0);
    let row = manifest.lines().nth(2).unwrap();
    assert!(row.starts_with("px,"), "{row}");
    assert_eq!(
        row.split(',').nth(2),
        Some("2"),
        "n - 1 returns after dropping NA: {row}"
    );
    assert_eq!(row.split(',').nth(3), Some("1"));

    let rets = dir.path().join("rets.csv");
    fs::write(&rets, "2020-01-02,0.5\n2020-01-03,-1.25\n2020-01-06,0.0\n").unwrap();
    let o = volcast(&["ingest", s(&rets), "--kind", "returns", "--out-dir", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let normalized = read(&out.join("rets.csv"));
    assert_eq!(normalized.lines().skip(2).count(), 3);
    assert!(normalized.contains("2020-01-03,-1.25"));

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    assert_eq!(
        volcast(&["ingest", s(&empty), "--out-dir", s(&out)]).status.code(),
        Some(2)
    );

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,close\n2020-01-02,100\n2020-01-03,abc\n").unwrap();
    let o = volcast(&["ingest", s(&bad), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":3:"), "line number expected: {}", stderr(&o));
}

#[test]
fn fit_bundled_sample() {
    let dir = tempfile::tempdir().unwrap();
    let art = dir.path().join("fit.toml");
    let data = fixture("tegarch_sample.csv");
    let o = volcast(&["fit", "--data", s(&data), "--model", "tegarch", "-o", s(&art)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = read(&art);
    assert_header(&text, 0);
    assert!(text.contains("converged = true"), "{text}");
    assert!(stdout(&o).contains("std.err"));

    let o = volcast(&["fit", "--data", s(&data), "--model", "tegarch-nl", "-o", s(&art)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let gamma = stdout(&o).lines().find(|l| l.starts_with("gamma")).unwrap().to_owned();
    assert_eq!(gamma.split_whitespace().nth(1), Some("0.000000"), "{gamma}");

    let o = volcast(&[
        "fit",
        "--data",
        s(&data),
        "--model",
        "tegarch",
        "--length",
        "49",
        "-o",
        s(&art),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = volcast(&["fit", "--data", s(&data), "--model", "garch", "-o", s(&art)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fit_sv_writes_trace_and_zero_rho() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = volcast(&[
        "fit",
        "--data",
        s(&fixture("smoke_sample.csv")),
        "--model",
        "sv-nl",
        "--iterations",
        "300",
        "--burn-in",
        "100",
        "--seed",
        "5",
        "--trace",
        s(&trace),
        "-o",
        s(&dir.path().join("sv.toml")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rho = stdout(&o).lines().find(|l| l.starts_with("rho")).unwrap().to_owned();
    assert!(rho.split_whitespace().skip(1).all(|v| v == "0.000000"), "{rho}");
    let t = read(&trace);
    assert_header(&t, 5);
    assert_eq!(t.lines().count(), 2 + 200);
}

fn smoke(out: &Path, extra: &[&str]) -> Output {
    let cfg = fixture("smoke.toml");
    let mut args = vec!["backtest", "-c", s(&cfg), "-o", s(out), "-q"];
    args.extend_from_slice(extra);
    volcast(&args)
}

const REPORT_FILES: [&str; 4] = [
    "scores.csv",
    "ratios.csv",
    "dm.csv",
    "cumdelta_tegarch-nl_vs_tegarch.csv",
];

#[test]
fn smoke_backtest_is_fast_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("w1"), dir.path().join("w16"));
    let start = Instant::now();
    let o = smoke(&a, &["--workers", "1"]);
    let elapsed = start.elapsed();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(elapsed.as_secs() < 60, "smoke plan took {elapsed:?}");
    let o = smoke(&b, &["--workers", "16"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in REPORT_FILES {
        let (x, y) = (read(&a.join(f)), read(&b.join(f)));
        assert_header(&x, 11);
        assert_eq!(x, y, "{f} differs between 1 and 16 workers");
    }
    let scores = read(&a.join("scores.csv"));
    // 2 models x 2 horizons x 5 weights x 50 origins
    assert_eq!(scores.lines().count(), 2 + 2 * 2 * 5 * 50);
    assert!(stdout(&o).contains("relative to tegarch-nl"));
}

#[test]
fn resume_after_interruption_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (full, cut) = (dir.path().join("full"), dir.path().join("cut"));
    assert!(smoke(&full, &[]).status.success());
    assert!(smoke(&cut, &[]).status.success());

    // keep the header and the first three finished blocks, then a torn row
    let journal = read(&cut.join("journal.csv"));
    let mut kept = Vec::new();
    let mut blocks = 0;
    for line in journal.lines() {
        kept.push(line);
        if line.starts_with("D,") {
            blocks += 1;
            if blocks == 3 {
                break;
            }
        }
    }
    let mut partial = kept.join("\n");
    partial.push_str("\nR,smoke_sample,tegarch,2");
    fs::write(cut.join("journal.csv"), partial).unwrap();
    for f in REPORT_FILES {
        fs::remove_file(cut.join(f)).unwrap();
    }

    let o = smoke(&cut, &["--resume"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in REPORT_FILES {
        assert_eq!(read(&full.join(f)), read(&cut.join(f)), "{f}");
    }
}

#[test]
fn resume_refuses_a_different_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    assert!(smoke(&out, &[]).status.success());
    let o = smoke(&out, &["--resume", "--seed", "12"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::copy(fixture("smoke_sample.csv"), dir.path().join("smoke_sample.csv")).unwrap();
    fs::write(&cfg, "seed = 1\n[data]\nseries = [\"smoke_sample.csv\"]\n").unwrap();
    let o = volcast(&["backtest", "-c", s(&cfg), "-o", s(&dir.path().join("o")), "-q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`models.roster`"), "{}", stderr(&o));

    fs::write(
        &cfg,
        "seed = 1\n[data]\nseries = [\"nope.csv\"]\n[models]\nroster = [\"tegarch\"]\n",
    )
    .unwrap();
    let o = volcast(&["backtest", "-c", s(&cfg), "-q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.csv"), "{}", stderr(&o));

    // window + horizon longer than the series: plan error before any work
    fs::write(
        &cfg,
        "seed = 1\n[data]\nseries = [\"smoke_sample.csv\"]\n[models]\nroster = [\"tegarch\"]\n[backtest]\nwindow = 300\n",
    )
    .unwrap();
    let out = dir.path().join("o2");
    let o = volcast(&["backtest", "-c", s(&cfg), "-o", s(&out), "-q"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("scores.csv").exists());

    fs::write(&cfg, "seed = 1\n[backtest]\nwindw = 3\n").unwrap();
    assert_eq!(volcast(&["backtest", "-c", s(&cfg), "-q"]).status.code(), Some(2));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.csv");
    let sim = |env: Option<&str>, flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_volcast"));
        c.args([
            "simulate",
            "--model",
            "sv",
            "--param",
            "mu=0",
            "--param",
            "phi=0.9",
            "--param",
            "sigma=0.2",
        ]);
        c.args(["-n", "20", "-q", "-o", s(&out)]);
        c.env_remove("VOLCAST_SEED");
        if let Some(e) = env {
            c.env("VOLCAST_SEED", e);
        }
        if let Some(f) = flag {
            c.args(["--seed", f]);
        }
        assert!(c.output().unwrap().status.success());
        read(&out)
    };
    assert_header(&sim(None, None), 0);
    let env = sim(Some("77"), None);
    assert_header(&env, 77);
    assert_header(&sim(Some("77"), Some("5")), 5);
    assert_eq!(env, sim(Some("77"), None));
    assert_ne!(env.lines().nth(2), sim(None, Some("78")).lines().nth(2));
}

#[test]
fn compare_and_report_from_scores() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bt");
    assert!(smoke(&out, &[]).status.success());
    let scores = out.join("scores.csv");
    let cmp = dir.path().join("cmp");
    let o = volcast(&[
        "compare",
        "--scores",
        s(&scores),
        "--benchmark",
        "tegarch",
        "--hln",
        "-o",
        s(&cmp),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ratios = read(&cmp.join("ratios.csv"));
    assert_header(&ratios, 11);
    for line in ratios.lines().skip(2).filter(|l| l.starts_with("tegarch,")) {
        assert!(line.ends_with(",1"), "{line}");
    }
    assert!(read(&cmp.join("dm.csv")).lines().count() > 2);

    let rep = dir.path().join("rep");
    let o = volcast(&["report", "--scores", s(&scores), "-o", s(&rep)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        read(&rep.join("cumdelta_tegarch-nl_vs_tegarch.csv"))
            .lines()
            .skip(1)
            .collect::<Vec<_>>(),
        read(&out.join("cumdelta_tegarch-nl_vs_tegarch.csv"))
            .lines()
            .skip(1)
            .collect::<Vec<_>>()
    );

    let missing = dir.path().join("none.csv");
    assert_eq!(
        volcast(&["compare", "--scores", s(&missing), "-o", s(&cmp)])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn mid_run_failure_exits_4_and_keeps_the_journal() {
    let dir = tempfile::tempdir().unwrap();
    // noise first, then a flat stretch: later SPEGARCH windows have no
    // residual variance to bootstrap from
    let mut csv = String::from("date,value\n");
    for i in 0..420 {
        let v = if i < 200 {
            ((i * 7919) % 200) as f64 / 50.0 - 2.0
        } else {
            0.0
        };
        csv.push_str(&format!("{},{v}\n", day_after(i)));
    }
    fs::write(dir.path().join("flat.csv"), csv).unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "seed = 3\nworkers = 1\n[data]\nseries = [\"flat.csv\"]\n[models]\nroster = [\"spegarch\"]\n\
         [backtest]\nwindow = 200\nrefit_every = 100\nhorizons = [1]\nweights = [\"uniform\"]\n\
         [forecast]\nn_paths = 200\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = volcast(&["backtest", "-c", s(&cfg), "-o", s(&out), "-q"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("--resume"), "{}", stderr(&o));
    assert!(read(&out.join("journal.csv")).starts_with("# volcast "));
    assert!(!out.join("scores.csv").exists());
}

/// ISO date `n` days after 2001-01-01 (non-leap arithmetic is enough here).
fn day_after(n: u32) -> String {
    const DAYS: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];
    let (mut y, mut m, mut d) = (2001, 1, 1);
    for _ in 0..n {
        d += 1;
        if d > DAYS[(m - 1) as usize] {
            d = 1;
            m += 1;
            if m > 12 {
                m = 1;
                y += 1;
            }
        }
    }
    format!("{y:04}-{m:02}-{d:02}")
}

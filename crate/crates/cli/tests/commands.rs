use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gaitwarp"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_univariate(path: &Path, values: &[f64]) {
    let text: String = values
        .iter()
        .enumerate()
        .map(|(t, v)| format!("{},{}\n", t, v))
        .collect();
    fs::write(path, text).unwrap();
}

fn user_signal(k: usize, len: usize) -> String {
    let freq = [0.05, 0.11, 0.19][k];
    let mut s = String::new();
    for t in 0..len {
        let tf = t as f64;
        let x = (tf * freq * std::f64::consts::TAU).sin() + 3.0 * k as f64;
        let y = (tf * freq * 2.0).cos() - 2.0 * k as f64;
        let z = ((t * (k + 3)) % 7) as f64 / 7.0;
        s.push_str(&format!("{},{},{},{}\n", tf * 0.03, x, y, z));
    }
    s
}

fn toy_dataset(dir: &Path) {
    for k in 0..3 {
        fs::write(dir.join(format!("{}.csv", k + 1)), user_signal(k, 120)).unwrap();
    }
}

const SMALL: &[&str] = &[
    "--window",
    "30",
    "--R",
    "6",
    "--lmin",
    "4",
    "--lmax",
    "7",
    "--budget",
    "16",
    "--init-design",
    "6",
];

#[test]
fn dtw_identical_files_print_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    write_univariate(&a, &[0.5, -1.0, 2.0, 2.0]);
    let o = run(&["dtw", a.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "0");
}

#[test]
fn dtw_small_example_prints_one() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    write_univariate(&a, &[0.0, 1.0, 2.0]);
    write_univariate(&b, &[0.0, 2.0]);
    let o = run(&["dtw", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "1");

    let o = run(&["dtw", a.to_str().unwrap(), b.to_str().unwrap(), "--path"]);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "1");
    assert_eq!(lines[1], "l,i,j");
    assert_eq!(lines.last().unwrap(), &format!("{},3,2", lines.len() - 2));
}

#[test]
fn dtw_missing_file_fails() {
    let o = run(&["dtw", "/nonexistent/a.csv", "/nonexistent/b.csv"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

#[test]
fn search_finds_planted_copies() {
    let dir = tempfile::tempdir().unwrap();
    let (p, s) = (dir.path().join("p.csv"), dir.path().join("s.csv"));
    let x = [1.0, 3.0, 2.0];
    write_univariate(&p, &x);
    let mut y = vec![40.0; 4];
    y.extend_from_slice(&x);
    y.extend_from_slice(&[40.0; 5]);
    y.extend_from_slice(&x);
    y.push(40.0);
    write_univariate(&s, &y);
    let o = run(&[
        "search",
        p.to_str().unwrap(),
        s.to_str().unwrap(),
        "--tau",
        "1e-6",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "rank,a,b,distance\n1,5,7,0\n2,13,15,0\n");

    let o = run(&[
        "search",
        p.to_str().unwrap(),
        s.to_str().unwrap(),
        "--tau",
        "0",
        "--R",
        "3",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);
}

#[test]
fn search_below_all_delta_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let (p, s) = (dir.path().join("p.csv"), dir.path().join("s.csv"));
    write_univariate(&p, &[0.0, 0.0]);
    write_univariate(&s, &[5.0, 6.0, 7.0]);
    let o = run(&[
        "search",
        p.to_str().unwrap(),
        s.to_str().unwrap(),
        "--tau",
        "1",
    ]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "rank,a,b,distance\n");
}

#[test]
fn search_channel_mismatch_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (p, s) = (dir.path().join("p.csv"), dir.path().join("s.csv"));
    write_univariate(&p, &[0.0, 1.0]);
    fs::write(&s, "0,1,2,3\n1,1,2,3\n").unwrap();
    let o = run(&["search", p.to_str().unwrap(), s.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("channel"));
}

#[test]
fn embed_writes_basis_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    write_univariate(&a, &[0.0, 1.0, 0.5]);
    let out = dir.path().join("emb");
    let o = run(&[
        "embed",
        "--out",
        out.to_str().unwrap(),
        "--R",
        "5",
        a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let basis = fs::read_to_string(out.join("basis.txt")).unwrap();
    assert!(basis.starts_with("5 1 20 30 0.4 0"));
    let emb = fs::read_to_string(out.join("embeddings.csv")).unwrap();
    let lines: Vec<&str> = emb.lines().collect();
    assert_eq!(lines[0], "series,phi_1,phi_2,phi_3,phi_4,phi_5");
    assert_eq!(lines[1].split(',').count(), 6);
}

#[test]
fn identify_kernel_is_deterministic() {
    let data = tempfile::tempdir().unwrap();
    toy_dataset(data.path());
    let out = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for run_dir in ["one", "two"] {
        let dir = out.path().join(run_dir);
        let mut args = vec![
            "identify",
            data.path().to_str().unwrap(),
            "--method",
            "kernel",
            "--seed",
            "7",
            "--out",
            dir.to_str().unwrap(),
        ];
        args.extend_from_slice(SMALL);
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        // calibration ran automatically
        assert!(dir.join("model.txt").exists());
        assert!(dir.join("kernel_heatmap.pgm").exists());
        csvs.push((
            fs::read(dir.join("kernel_matrix.csv")).unwrap(),
            fs::read(dir.join("kernel_matches.csv")).unwrap(),
        ));
    }
    assert_eq!(csvs[0], csvs[1]);
    let matrix = String::from_utf8(csvs[0].0.clone()).unwrap();
    assert_eq!(matrix.lines().next().unwrap(), "stream,1,2,3");
    assert_eq!(matrix.lines().count(), 4);
}

#[test]
fn identify_reuses_calibrated_model() {
    let data = tempfile::tempdir().unwrap();
    toy_dataset(data.path());
    let out = tempfile::tempdir().unwrap();
    let cal = out.path().join("cal");
    let mut args = vec![
        "calibrate",
        data.path().to_str().unwrap(),
        "--out",
        cal.to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    assert!(run(&args).status.success());
    assert!(cal.join("basis.txt").exists());

    let model = cal.join("model.txt");
    let first = out.path().join("first");
    let second = out.path().join("second");
    for dir in [&first, &second] {
        let mut args = vec![
            "identify",
            data.path().to_str().unwrap(),
            "--method",
            "kernel",
            "--model",
            model.to_str().unwrap(),
            "--csv-only",
            "--out",
            dir.to_str().unwrap(),
        ];
        args.extend_from_slice(SMALL);
        let o = run(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(!dir.join("kernel_heatmap.pgm").exists());
    }
    assert_eq!(
        fs::read(first.join("kernel_matrix.csv")).unwrap(),
        fs::read(second.join("kernel_matrix.csv")).unwrap()
    );
}

#[test]
fn bench_on_self_match_dataset() {
    let data = tempfile::tempdir().unwrap();
    toy_dataset(data.path());
    let out = tempfile::tempdir().unwrap();
    let mut args = vec![
        "bench",
        data.path().to_str().unwrap(),
        "--no-holdout",
        "--out",
        out.path().to_str().unwrap(),
    ];
    args.extend_from_slice(SMALL);
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.path().join("bench.csv")).unwrap();
    let rows: Vec<Vec<String>> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    assert_eq!(
        table.lines().next().unwrap(),
        "method,accuracy,cost_evals,wall_ms"
    );
    assert_eq!(rows.len(), 2);
    assert_eq!(
        (rows[0][0].as_str(), rows[1][0].as_str()),
        ("dtw", "kernel")
    );
    assert_eq!(rows[0][1], "1");
    assert_eq!(rows[1][1], "1");
    assert_ne!(rows[0][2], rows[1][2]);

    let cmp = fs::read_to_string(out.path().join("comparison.csv")).unwrap();
    for line in cmp.lines().skip(1) {
        let f: Vec<u64> = line
            .split(',')
            .skip(2)
            .map(|v| v.parse().unwrap())
            .collect();
        assert!(f[0] <= f[1], "kernel ops {} above bound {}", f[0], f[1]);
        assert_eq!(f[2], 30 * 120);
    }
}

#[test]
fn empty_dataset_dir_fails() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    for cmd in ["identify", "bench", "calibrate"] {
        let o = run(&[
            cmd,
            data.path().to_str().unwrap(),
            "--out",
            out.path().to_str().unwrap(),
        ]);
        assert!(!o.status.success(), "{} accepted an empty directory", cmd);
    }
}

#[test]
fn config_file_feeds_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "R = 4\nlmin = 3\nlmax = 3\nseed = 9\n").unwrap();
    let out = dir.path().join("emb");
    let o = run(&[
        "embed",
        "--out",
        out.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let basis = fs::read_to_string(out.join("basis.txt")).unwrap();
    assert!(basis.starts_with("4 3 3 3 0.4 11"));
}

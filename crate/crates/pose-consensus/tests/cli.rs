use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_pose-consensus");

fn cli(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("POSE_CONSENSUS_CACHE")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    /// 12 pairs, 4 videos each, yaw between 50 and 65 degrees.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let o = cli(&["synth", "--out", s(&root.join("fx")), "--pairs", "12", "--seed", "4"]);
        assert!(o.status.success(), "{}", stderr(&o));
        Fixture { _dir: dir, root }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.root.join(p)
    }

    fn manifest(&self) -> String {
        s(&self.path("fx/manifest.json")).into()
    }

    fn run_args(&self, backend: &str, out: &str) -> Vec<String> {
        [
            "run",
            "--manifest",
            &self.manifest(),
            "--registry",
            s(&self.path("fx/registry.json")),
            "--backend",
            backend,
            "--out",
            s(&self.path(out)),
        ]
        .map(String::from)
        .to_vec()
    }

    fn synthetic(&self) -> String {
        format!("synthetic:{}", s(&self.path("fx/scenario.json")))
    }
}

fn run(args: &[String], extra: &[&str]) -> Output {
    let mut all: Vec<&str> = args.iter().map(String::as_str).collect();
    all.extend_from_slice(extra);
    cli(&all)
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn select_pairs_count_zero_is_empty_success() {
    let f = Fixture::new();
    let o = cli(&["select-pairs", "--manifest", &f.manifest(), "--yaw-min", "0", "--yaw-max", "180", "--count", "0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn select_pairs_without_candidates_exits_2() {
    let f = Fixture::new();
    let o = cli(&["select-pairs", "--manifest", &f.manifest(), "--yaw-min", "170", "--yaw-max", "180", "--count", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!stderr(&o).trim().is_empty());
}

#[test]
fn select_pairs_is_seeded_and_feeds_run() {
    let f = Fixture::new();
    let list = f.path("pairs.txt");
    let select = |seed: &str, out: &Path| {
        let o = cli(&[
            "select-pairs", "--manifest", &f.manifest(), "--yaw-min", "0", "--yaw-max", "180", "--count", "5",
            "--seed", seed, "--out", s(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(out).unwrap()
    };
    let first = select("9", &list);
    assert_eq!(first, select("9", &f.path("again.txt")));
    let ids: Vec<&str> = first.lines().collect();
    assert_eq!(ids.len(), 5);

    let o = run(&f.run_args(&f.synthetic(), "out"), &["--pairs", s(&list)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(f.path("out/per_pair.csv")).unwrap();
    let mut seen: Vec<&str> = table.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seen.len(), 5 * 4);
    seen.dedup();
    let mut want = ids.clone();
    want.sort();
    assert_eq!(seen, want);
}

#[test]
fn run_with_empty_yaw_band_exits_2() {
    let f = Fixture::new();
    let o = run(&f.run_args(&f.synthetic(), "out"), &["--yaw-min", "0", "--yaw-max", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn run_with_broken_backend_exits_3() {
    let f = Fixture::new();
    let o = run(&f.run_args("process:/nonexistent/estimator", "out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = run(&f.run_args("process:sleep 5", "out"), &["--timeout-secs", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn bad_input_exits_1() {
    let f = Fixture::new();
    let mut args = f.run_args(&f.synthetic(), "out");
    args[2] = s(&f.path("missing.json")).into();
    assert_eq!(run(&args, &[]).status.code(), Some(1));
}

#[test]
fn uncached_run_calls_backend_once_per_request() {
    let f = Fixture::new();
    let o = run(&f.run_args(&f.synthetic(), "out"), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    // 12 pairs, each with one pair-only call and 4 videos x (1 uniform + 10 random).
    let want = 12 * (1 + 4 * 11);
    assert!(
        stderr(&o).contains(&format!("{want} requests, {want} backend calls, 0 cache hits")),
        "{}",
        stderr(&o)
    );
}

#[test]
fn cache_env_var_enables_warm_reruns() {
    let f = Fixture::new();
    let args: Vec<String> = f.run_args(&f.synthetic(), "out");
    let with_env = |out: &str| {
        let mut a = args.clone();
        *a.last_mut().unwrap() = s(&f.path(out)).into();
        Command::new(BIN)
            .args(&a)
            .env("POSE_CONSENSUS_CACHE", f.path("cache"))
            .output()
            .unwrap()
    };
    assert!(with_env("cold").status.success());
    let warm = with_env("warm");
    assert!(stderr(&warm).contains(" 0 backend calls"), "{}", stderr(&warm));
    assert_eq!(read_dir(&f.path("cold")), read_dir(&f.path("warm")));
}

#[test]
fn process_bridge_matches_in_process_backend() {
    let f = Fixture::new();
    let direct = run(&f.run_args(&f.synthetic(), "direct"), &["--buckets", "50,58,66"]);
    assert!(direct.status.success(), "{}", stderr(&direct));
    let cmd = format!(
        "process:{} serve --backend {}",
        shlex::try_quote(BIN).unwrap(),
        shlex::try_quote(&f.synthetic()).unwrap()
    );
    let bridged = run(&f.run_args(&cmd, "bridged"), &["--buckets", "50,58,66", "--jobs", "2"]);
    assert!(bridged.status.success(), "{}", stderr(&bridged));
    assert_eq!(read_dir(&f.path("direct")), read_dir(&f.path("bridged")));
}

#[test]
fn variant_filter_limits_outputs() {
    let f = Fixture::new();
    let o = run(&f.run_args(&f.synthetic(), "out"), &["--variants", "medoid"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let names: Vec<String> = read_dir(&f.path("out")).into_iter().map(|(n, _)| n).collect();
    assert!(names.contains(&"curve_medoid.csv".to_string()), "{names:?}");
    assert!(!names.iter().any(|n| n.contains("oracle")), "{names:?}");
    let table = std::fs::read_to_string(f.path("out/per_pair.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 12);
}

#[test]
fn serve_rejects_process_backends() {
    let o = cli(&["serve", "--backend", "process:cat"]);
    assert_eq!(o.status.code(), Some(1));
}

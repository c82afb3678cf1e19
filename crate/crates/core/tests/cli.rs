//! End-to-end checks of the command-line surface: subcommands, file formats
//! and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coldstart::harness::{load_embeddings, load_selection, parse_report_json};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coldstart"))
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = bin()
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn coldstart");
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(args: &[&str], dir: &Path) -> i32 {
    bin()
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "off")
        .output()
        .expect("spawn coldstart")
        .status
        .code()
        .unwrap_or(-1)
}

#[test]
fn gen_graph_select_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(
        &[
            "gen",
            "--items", "120", "--users", "40", "--cold", "10",
            "--dim", "6", "--clusters", "4", "--norm-skew", "0.3", "--seed", "9",
            "--items-out", "items.txt", "--users-out", "users.txt", "--cold-out", "cold.txt",
        ],
        d,
    );
    let items = load_embeddings(&d.join("items.txt")).unwrap();
    assert_eq!(items.count(), 120);
    assert_eq!(items.dim(), 6);

    run_ok(
        &[
            "graph-build",
            "--items", "items.txt", "--k", "6", "--ef-construction", "60",
            "--out", "graph.txt",
        ],
        d,
    );
    for (method, extra) in [
        ("greedy", vec![]),
        ("hull", vec!["--num-directions", "200"]),
        ("ipgs", vec!["--graph", "graph.txt", "--ef", "60"]),
        ("max-in-degree", vec!["--graph", "graph.txt"]),
    ] {
        let out_file = format!("sel_{method}.txt");
        let mut args = vec![
            "select",
            "--items", "items.txt", "--users", "users.txt",
            "--method", method, "--m", "8", "--out", &out_file,
        ];
        args.extend(extra);
        run_ok(&args, d);
        let sel = load_selection(&d.join(&out_file), &items).unwrap();
        assert_eq!(sel.m(), 8);
    }

    let eval = run_ok(
        &[
            "evaluate",
            "--items", "items.txt", "--users", "cold.txt",
            "--selection", "sel_greedy.txt", "--population", "cold",
        ],
        d,
    );
    let text = String::from_utf8(eval.stdout).unwrap();
    assert!(text.starts_with("schema,method,m,population"));
    assert!(text.contains("coldstart-eval/1,greedy,8,cold"));
}

#[test]
fn run_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = [
        "run",
        "--set", "m_grid=4,9",
        "--set", "dim=5",
        "--set", "synth.n_items=100",
        "--set", "synth.n_users=40",
        "--set", "synth.n_cold_users=12",
        "--set", "graph.k=5",
        "--set", "graph.ef_construction=50",
        "--set", "graph.ef_search=50",
        "--set", "hull.num_directions=200",
        "--set", "seed=77",
    ];
    let mut first = args.to_vec();
    first.extend(["--out", "a.csv", "--json", "a.json"]);
    run_ok(&first, d);
    let mut second = args.to_vec();
    second.extend(["--out", "b.csv", "--json", "b.json"]);
    run_ok(&second, d);
    assert_eq!(
        std::fs::read(d.join("a.csv")).unwrap(),
        std::fs::read(d.join("b.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(d.join("a.json")).unwrap(),
        std::fs::read(d.join("b.json")).unwrap()
    );
    let report = parse_report_json(&std::fs::read(d.join("a.json")).unwrap()).unwrap();
    // 7 default methods x 2 m values x 2 populations.
    assert_eq!(report.rows.len(), 28);
    assert!(report.rows.iter().all(|r| r.error.is_none()));
}

#[test]
fn ratings_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut rows = String::from("user,item,rating,timestamp\n");
    for u in 0..30 {
        for i in 0..40 {
            if (u * 7 + i * 3) % 4 != 0 {
                rows.push_str(&format!("u{u},i{i},{},0\n", 1 + (u * i) % 5));
            }
        }
    }
    std::fs::write(d.join("ratings.csv"), rows).unwrap();
    run_ok(
        &[
            "mf-train",
            "--ratings", "ratings.csv", "--dim", "4", "--lambda", "0.1",
            "--epochs", "8", "--seed", "3",
            "--users-out", "u.bin", "--items-out", "x.bin", "--binary",
        ],
        d,
    );
    let items = load_embeddings(&d.join("x.bin")).unwrap();
    assert_eq!(items.dim(), 4);
    run_ok(
        &[
            "fit-cold",
            "--ratings", "ratings.csv", "--items", "x.bin",
            "--lambda", "0.1", "--out", "q.txt",
        ],
        d,
    );
    assert_eq!(load_embeddings(&d.join("q.txt")).unwrap().count(), 30);

    run_ok(
        &[
            "run",
            "--ratings", "ratings.csv",
            "--set", "dim=4",
            "--set", "m_grid=3,6",
            "--set", "mf.epochs=6",
            "--set", "methods=greedy,max-norm,ipgs-exact,user-expectation",
            "--out", "report.csv",
        ],
        d,
    );
    let report = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1 + 4 * 2 * 2);
    assert!(report.starts_with("schema,config_hash,seed,method,m,population"));
}

#[test]
fn diagnose_emits_figure_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(
        &[
            "gen",
            "--items", "90", "--users", "25", "--dim", "4", "--norm-skew", "0.5",
            "--seed", "4", "--items-out", "items.txt", "--users-out", "users.txt",
        ],
        d,
    );
    std::fs::write(d.join("r.csv"), "u1,i0,5\nu1,i1,5\nu2,i0,5\nu3,i0,2\n").unwrap();
    run_ok(
        &[
            "diagnose",
            "--items", "items.txt", "--users", "users.txt", "--ratings", "r.csv",
            "--k", "5", "--edges", "1,10,100", "--high-threshold", "5",
            "--out-prefix", "diag",
        ],
        d,
    );
    let occupancy = std::fs::read_to_string(d.join("diag.occupancy.csv")).unwrap();
    assert!(occupancy.starts_with("schema,group_upper_pct,item_count,share"));
    assert_eq!(occupancy.lines().count(), 4);
    let shares: f64 = occupancy
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((shares - 1.0).abs() < 1e-9);
    assert!(d.join("diag.norms.csv").exists());
    assert!(d.join("diag.popularity.csv").exists());
}

#[test]
fn exit_codes_distinguish_validation_from_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_ok(
        &[
            "gen",
            "--items", "20", "--users", "5", "--dim", "3", "--seed", "1",
            "--items-out", "items.txt", "--users-out", "users.txt",
        ],
        d,
    );
    // Unknown method: validation error.
    assert_eq!(
        exit_code(
            &[
                "select",
                "--items", "items.txt", "--users", "users.txt",
                "--method", "nope", "--m", "3", "--out", "x.txt",
            ],
            d,
        ),
        2
    );
    // m larger than the item count: validation error.
    assert_eq!(
        exit_code(
            &[
                "select",
                "--items", "items.txt", "--users", "users.txt",
                "--method", "greedy", "--m", "999", "--out", "x.txt",
            ],
            d,
        ),
        2
    );
    // Exhaustive refusal over the subset budget: validation error.
    assert_eq!(
        exit_code(
            &[
                "select",
                "--items", "items.txt", "--users", "users.txt",
                "--method", "exhaustive", "--m", "10", "--budget", "10",
                "--out", "x.txt",
            ],
            d,
        ),
        2
    );
    // Missing input file: runtime error.
    assert_eq!(
        exit_code(
            &[
                "select",
                "--items", "missing.txt", "--users", "users.txt",
                "--method", "greedy", "--m", "3", "--out", "x.txt",
            ],
            d,
        ),
        1
    );
    // A config file with an unknown key: validation error.
    std::fs::write(d.join("bad.cfg"), "no_such_key=1\n").unwrap();
    assert_eq!(exit_code(&["run", "--config", "bad.cfg", "--out", "r.csv"], d), 2);
}

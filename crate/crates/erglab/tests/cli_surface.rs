//! End-to-end checks of the command-line surface: exit codes, CSV schema
//! round-trips, config/flag merging, and thread-count independence.

use erglab::csvio::read_csv;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_erglab")
}

fn tmpdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("erglab-clitest-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &str, out: &PathBuf) -> i32 {
    Command::new(bin())
        .args(args.split_whitespace())
        .arg("--out")
        .arg(out)
        .status()
        .expect("spawn erglab")
        .code()
        .expect("exit code")
}

#[test]
fn dist_reproduces_arcsine_row_and_schema() {
    let out = tmpdir().join("dist.csv");
    let code = run("dist --law xi --alpha 0.5 --grid 1001", &out);
    assert_eq!(code, 0);
    let raw = std::fs::read_to_string(&out).unwrap();
    assert!(raw.starts_with("# erglab-schema-v1 dist\n"));
    let t = read_csv(&out).unwrap();
    assert_eq!(t.columns, vec!["x", "pdf", "cdf"]);
    assert_eq!(t.rows.len(), 1001);
    let row = t.rows.iter().find(|r| (r[0] - 0.5).abs() < 1e-12).expect("x = 0.5 on grid");
    assert!((row[1] - 2.0 / std::f64::consts::PI).abs() <= 1e-12);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tmpdir();
    // exit 2: malformed flags (unknown subcommand)
    let code = Command::new(bin()).arg("nonsense").status().unwrap().code().unwrap();
    assert_eq!(code, 2);

    // exit 2: config file with an unknown key
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, r#"{"command":"dist","law":"xi:0.5","grid":11,"frobnicate":1}"#).unwrap();
    let code = Command::new(bin())
        .arg("--config")
        .arg(&cfg)
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 2);

    // exit 2: stochastic command without a seed
    let out = dir.join("noseed.csv");
    let code = run(
        "limitcheck --model renewal --tail power:0.5 --stat zn_over_n --law xi:0.5 \
         --nlist 10,20,40 --samples 100 --threshold 0.5",
        &out,
    );
    assert_eq!(code, 2);

    // exit 1: gate failure (absurd threshold on the exact oracle)
    let out = dir.join("gate.csv");
    let code = run(
        "limitcheck --exact --model renewal --tail power:0.5 --stat zn_over_n --law xi:0.5 \
         --nlist 50,100,200 --threshold 1e-9",
        &out,
    );
    assert_eq!(code, 1);

    // exit 0: same run with a sane threshold
    let out = dir.join("gate0.csv");
    let code = run(
        "limitcheck --exact --model renewal --tail power:0.5 --stat zn_over_n --law xi:0.5 \
         --nlist 50,100,200 --threshold 0.2",
        &out,
    );
    assert_eq!(code, 0);
}

#[test]
fn config_file_drives_a_full_run_and_flags_override() {
    let dir = tmpdir();
    let out_file = dir.join("from_config.csv");
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        format!(
            r#"{{
  "command": "limitcheck",
  "model": "renewal",
  "tail": "power:0.5",
  "stat": "zn_over_n",
  "law": "xi:0.5",
  "n_list": [50, 100, 200],
  "exact": true,
  "threshold": 0.2,
  "out": {:?}
}}"#,
            out_file.to_str().unwrap()
        ),
    )
    .unwrap();
    let code = Command::new(bin()).arg("--config").arg(&cfg).status().unwrap().code().unwrap();
    assert_eq!(code, 0);
    let t = read_csv(&out_file).unwrap();
    assert_eq!(t.command, "limitcheck");
    assert_eq!(t.rows.len(), 3);

    // flag overrides the config threshold into a failing gate
    let out2 = dir.join("override.csv");
    let code = Command::new(bin())
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out2)
        .args(["limitcheck", "--threshold", "1e-9"])
        .status()
        .unwrap()
        .code()
        .unwrap();
    assert_eq!(code, 1);
}

#[test]
fn thread_count_does_not_change_bytes() {
    let dir = tmpdir();
    let mut bytes = Vec::new();
    for threads in [1u32, 4] {
        let out = dir.join(format!("threads_{threads}.csv"));
        let code = run(
            &format!(
                "limitcheck --model renewal --tail power:0.5 --stat psi --law kacy:0.5 \
                 --nlist 100,1000,10000 --samples 2000 --threshold 0.2 --seed 5 --threads {threads}"
            ),
            &out,
        );
        assert_eq!(code, 0);
        bytes.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "worker count changed the output bytes");
}

#[test]
fn tail_simulate_laplace_regvar_tables_parse_back() {
    let dir = tmpdir();

    let out = dir.join("tail.csv");
    assert_eq!(run("tail --model renewal --tail harmonic --k-max 20", &out), 0);
    let t = read_csv(&out).unwrap();
    assert_eq!(t.columns, vec!["k", "t_k", "w_k"]);
    assert_eq!(t.rows.len(), 21);
    assert_eq!(t.rows[0][1], 1.0);

    let out = dir.join("sim.csv");
    assert_eq!(
        run("simulate --model renewal --tail power:0.5 --n 1000 --paths 64 --seed 3", &out),
        0
    );
    let t = read_csv(&out).unwrap();
    assert_eq!(t.columns, vec!["n", "z_n", "phi_n", "psi_n"]);
    assert_eq!(t.rows.len(), 64);
    for row in &t.rows {
        assert!(row[1] <= 1000.0);
        assert!(row[2] > 0.0 && row[2] <= 1.0);
        assert!(row[3] > 0.0 && row[3] <= 1.0);
    }

    let out = dir.join("laplace.csv");
    assert_eq!(run("laplace --tail harmonic --sgrid 1e-1,1e-2,1e-3 --threshold 0.1", &out), 0);
    let t = read_csv(&out).unwrap();
    assert_eq!(t.columns, vec!["s", "product", "abs_gap"]);
    assert!(t.rows[2][2] < t.rows[0][2]);

    let out = dir.join("ktt.csv");
    assert_eq!(run("regvar --check ktt --seq ones --rho 1 --nlist 100,1000", &out), 0);
    let t = read_csv(&out).unwrap();
    assert_eq!(t.columns, vec!["n_or_s", "ratio"]);

    let out = dir.join("kl.csv");
    assert_eq!(run("regvar --check kl --seq linear --p 0 --rho 1 --nlist 1e3,1e4", &out), 0);
    let t = read_csv(&out).unwrap();
    assert!((t.rows[1][1] - 2.0).abs() < 0.01);

    let out = dir.join("erickson.csv");
    assert_eq!(run("regvar --check erickson --seq log --x 0.5 --nlist 1e4,1e6", &out), 0);
    let t = read_csv(&out).unwrap();
    assert!(t.rows[1][1] < t.rows[0][1]); // a_n(x)/n decreasing

    let out = dir.join("ua.csv");
    assert_eq!(run("regvar --check ua --seq log --k-ratio 10 --nlist 1e3,1e6", &out), 0);
    let t = read_csv(&out).unwrap();
    assert!((t.rows[1][1] - 1.0).abs() < (t.rows[0][1] - 1.0).abs());

    let out = dir.join("distorted.csv");
    assert_eq!(
        run(
            "regvar --check distorted --alpha 0.5 --beta 0.5 --gamma 1 --n 1e12 \
             --samples 20000 --threshold 0.025",
            &out
        ),
        0
    );
    let t = read_csv(&out).unwrap();
    assert_eq!(t.columns, vec!["n", "ks", "threshold", "pass"]);
    assert_eq!(t.rows[0][3], 1.0);
}

#[test]
fn ulam_commands_emit_all_three_tables() {
    let dir = tmpdir();

    let out = dir.join("returning.csv");
    let code = run(
        "ulam --map lasota_yorke --cells 512 --mode exact --set-a 0.5,1 \
         --nlist 250,500 --seed 7",
        &out,
    );
    assert_eq!(code, 0);
    let t = read_csv(&out).unwrap();
    assert_eq!(
        t.columns,
        vec!["n", "sup_ratio", "inf_ratio", "median_ratio", "integrated_ratio", "doubling_median"]
    );
    assert_eq!(t.rows.len(), 2);

    let out = dir.join("uniform.csv");
    let code = run(
        "ulam --map lasota_yorke --cells 512 --mode exact --set-a 0.5,1 \
         --emit uniform --nlist 250,500 --n-cesaro 500 --seed 7",
        &out,
    );
    assert_eq!(code, 0);
    let t = read_csv(&out).unwrap();
    assert_eq!(t.rows.len(), 2);

    let out = dir.join("thaler_uniform.csv");
    let code = run(
        "ulam --map thaler --cells 512 --mode exact --set-a 0.81,1 \
         --emit uniform --nlist 200,400 --n-cesaro 400 --seed 7",
        &out,
    );
    assert_eq!(code, 0);
    let t = read_csv(&out).unwrap();
    assert_eq!(t.rows.len(), 2);

    let out = dir.join("hhat.csv");
    let code = run(
        "ulam --map lasota_yorke --cells 512 --mode mc --samples-per-cell 400 \
         --set-a 0.5,1 --emit hhat --nlist 100,200 --n-cesaro 400 --seed 7",
        &out,
    );
    assert_eq!(code, 0);
    let t = read_csv(&out).unwrap();
    assert_eq!(t.columns, vec!["cell_midpoint", "h_value"]);
    // decreasing-in-x trend of the estimated shape
    let first = t.rows.first().unwrap()[1];
    let last = t.rows.last().unwrap()[1];
    assert!(first > last, "shape should decrease: {first} vs {last}");
}

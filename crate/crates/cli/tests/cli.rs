use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gibbslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gibbslab")).args(args).env_remove("GIBBSLAB_THREADS").output().unwrap()
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// Header and rows of a CSV written by the tool, skipping the metadata line.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let (meta, body) = text.split_once('\n').unwrap();
    assert!(meta.starts_with("# tool=gibbslab"), "{meta}");
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn run_config(sub: &str, toml: &str, out: &Path) -> Output {
    let cfg = out.with_extension("toml");
    fs::write(&cfg, toml).unwrap();
    gibbslab(&[sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

const LIBRARY_OPERATIONS: &[&str] = &[
    "relative_entropy",
    "entropy_density_series",
    "csiszar_gap",
    "pressure_estimate",
    "decoupling_constant",
    "legendre_gap",
    "cm_term",
    "variation_at",
    "counterexample_f",
    "directional_delta",
    "bad_set_probability",
    "continuity_rate",
    "prop1_bound",
    "single_site_kernel_prob",
    "pushforward",
    "block_spin_check",
    "joint_kernel",
    "renormalized_conditional",
];

#[test]
fn every_operation_has_a_subcommand() {
    let out = gibbslab(&["operations"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let pairs: Vec<(&str, &str)> = text.lines().skip(1).filter_map(|l| l.split_once(',')).collect();
    for op in LIBRARY_OPERATIONS {
        let (_, sub) = pairs.iter().find(|(o, _)| o == op).unwrap_or_else(|| panic!("{op} not exposed"));
        let help = gibbslab(&[sub, "--help"]);
        assert!(help.status.success(), "{sub} --help");
    }
}

#[test]
fn example_configs_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut seen = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let stem = path.file_stem().unwrap().to_str().unwrap().to_owned();
        let sub = if stem.starts_with("quasilocality") { "quasilocality-scan" } else { stem.as_str() };
        let out = tmp.path().join(&stem);
        let o = gibbslab(&[sub, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{stem}: {}", String::from_utf8_lossy(&o.stderr));
        let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["subcommand"], sub);
        for file in manifest["outputs"].as_array().unwrap() {
            assert!(out.join(file.as_str().unwrap()).exists());
        }
        seen += 1;
    }
    assert_eq!(seen, 11);
}

#[test]
fn zero_pressure_is_a_column_of_zeros() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    let o = run_config(
        "pressure",
        "[model]\nd = 1\nbeta = 0.7\n[scenario]\nf = { kind = \"zero\" }\nnu = { kind = \"gibbs\", beta = 0.7 }\nn_max = 5\n",
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("pressure.csv"));
    assert_eq!(header, vec!["pressure"]);
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[0].parse::<f64>().unwrap() == 0.0));
}

#[test]
fn entropy_of_a_measure_against_itself_vanishes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("e");
    let o = run_config(
        "entropy-density",
        "[model]\nd = 2\nbeta = 0.4\n[scenario]\nmu = { kind = \"product\", p_plus = 0.3 }\nnu = { kind = \"product\", p_plus = 0.3 }\nn_max = 1\n",
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(column(&out.join("entropy_density.csv"), "per_site").iter().all(|v| v.abs() < 1e-10));
}

#[test]
fn decimated_chain_scan_matches_its_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = run_config(
        "quasilocality-scan",
        "[model]\nd = 1\nbeta = 0.9\n[scenario]\nms = [0, 1, 2, 3, 4, 5]\ntransform = { kind = \"decimation\", b = 3 }\n",
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scan = out.join("scan.csv");
    let gap = column(&scan, "gap");
    assert!(gap.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{gap:?}");
    assert!(gap[0] > gap[gap.len() - 1]);
    for name in ["plus", "minus", "gap"] {
        let oracle = column(&scan, &format!("oracle_{name}"));
        for (a, b) in column(&scan, name).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{name}: {a} vs {b}");
        }
    }
}

#[test]
fn exit_codes_follow_the_failure_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown_key = run_config("pressure", "[model]\nd = 1\nbeta = 1.0\ncolour = 3\n", &tmp.path().join("a"));
    assert_eq!(unknown_key.status.code(), Some(2));
    let bad_dim = run_config("pressure", "[model]\nd = 3\nbeta = 1.0\n", &tmp.path().join("b"));
    assert_eq!(bad_dim.status.code(), Some(2));
    let too_big = run_config("decimate", "[model]\nd = 1\nbeta = 1.0\n[scenario]\nradius = 40\n", &tmp.path().join("c"));
    assert_eq!(too_big.status.code(), Some(3));
    let singular = run_config(
        "cm-term",
        "[model]\nd = 1\nbeta = 1.0\n[scenario]\nmu = { kind = \"product\", p_plus = 0.5 }\nnu = { kind = \"product\", p_plus = 1.0 }\nms = [1]\nm_ref = 3\n",
        &tmp.path().join("d"),
    );
    assert_eq!(singular.status.code(), Some(4), "{}", String::from_utf8_lossy(&singular.stderr));
    let missing = gibbslab(&["pressure", "--config", tmp.path().join("none.toml").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("k");
    let cfg = configs().join("kernel-check.toml");
    let o = gibbslab(&["kernel-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success());
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 99);
    assert_eq!(m["engine"]["seed"], 99);
    let first = fs::read_to_string(out.join("kernel_check.csv")).unwrap();
    assert!(first.lines().next().unwrap().contains("seed=99"));
}

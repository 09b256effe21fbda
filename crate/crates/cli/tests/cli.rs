use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use viscobeam::config::RunConfig;

const BEAM: &str = "[beam]\nrho1 = 1.0\nrho2 = 64.0\nb = 64.0\nkappa = 1.0\nL = 1.0\n";
const NU3: &str = "[kernel]\ntype = \"power_law\"\na = 1.94\nnu = 3.0\n";

fn viscobeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viscobeam")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn short_run(extra: &str) -> String {
    format!(
        "{BEAM}{NU3}[history]\nkind = \"frozen\"\n[initial]\nphi = {{ kind = \"sine\" }}\n\
         [space]\nN = 32\n[time]\ndt = 0.01\nT = 1.0\n[output]\nevery = 5\npath = \"run.csv\"\n{extra}"
    )
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn check_kernel_accepts_heavy_and_rejects_light_power_law() {
    let ok = viscobeam(&["check-kernel", configs_dir().join("kernel_admissible.toml").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("passes_A1=true"));
    let bad = viscobeam(&["check-kernel", configs_dir().join("kernel_inadmissible.toml").to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("reason=mass 0.97 ≤ C0"), "{}", stdout(&bad));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let no_kernel = write(dir.path(), "a.toml", &format!("{BEAM}[space]\nN = 8\n[time]\ndt = 0.1\nT = 1.0\n"));
    assert_eq!(viscobeam(&["check-kernel", no_kernel.to_str().unwrap()]).status.code(), Some(2));
    let unknown = write(dir.path(), "b.toml", &short_run("[extras]\nfoo = 1\n"));
    assert_eq!(viscobeam(&["simulate", unknown.to_str().unwrap()]).status.code(), Some(2));
    let no_env = write(dir.path(), "c.toml", &short_run(""));
    assert_eq!(viscobeam(&["envelope", no_env.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn missing_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(viscobeam(&["simulate", dir.path().join("none.toml").to_str().unwrap()]).status.code(), Some(3));
    let cfg = write(dir.path(), "a.toml", &short_run(""));
    assert_eq!(viscobeam(&["fit-decay", cfg.to_str().unwrap()]).status.code(), Some(3));
    let unwritable = write(dir.path(), "b.toml", &short_run("").replace("run.csv", "missing/dir/run.csv"));
    assert_eq!(viscobeam(&["simulate", unwritable.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn zero_data_gives_zero_energy_column() {
    let dir = tempfile::tempdir().unwrap();
    let text = short_run("").replace("kind = \"frozen\"", "kind = \"zero\"").replace("phi = { kind = \"sine\" }", "");
    let cfg = write(dir.path(), "zero.toml", &text);
    let o = viscobeam(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "t,E_total,E_kin_phi,E_kin_psi,E_bend,E_shear,E_mem,diss_residual,q,envelope_bound"
    );
    let e = column(&csv, "E_total");
    assert_eq!(e.len(), 21);
    assert!(e.iter().all(|&v| v == 0.0));
}

#[test]
fn simulate_is_deterministic_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", &short_run("[envelope]\n"));
    let first = viscobeam(&["simulate", cfg.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0));
    let a = fs::read(dir.path().join("run.csv")).unwrap();
    assert_eq!(viscobeam(&["simulate", cfg.to_str().unwrap()]).status.code(), Some(0));
    let b = fs::read(dir.path().join("run.csv")).unwrap();
    assert_eq!(a, b);
    let csv = String::from_utf8(a).unwrap();
    let e = column(&csv, "E_total");
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
    let bound = column(&csv, "envelope_bound");
    assert_eq!(bound[0], e[0]);
    assert!(e.iter().zip(&bound).all(|(x, b)| x <= b));

    let env = viscobeam(&["envelope", cfg.to_str().unwrap()]);
    assert_eq!(env.status.code(), Some(0));
    assert!(stdout(&env).contains("violations=0"));
    assert!(dir.path().join("run.envelope.txt").exists());
}

#[test]
fn fit_decay_recovers_a_synthetic_power_law() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..=200).map(|i| format!("{i},{:e}\n", (1.0 + i as f64).powi(-2))).collect();
    let csv = write(dir.path(), "synthetic.csv", &format!("t,E_total\n{rows}"));
    let cfg = write(dir.path(), "a.toml", &short_run(""));
    let o = viscobeam(&["fit-decay", cfg.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("exponent=2.000000") && out.contains("target=2") && out.contains("pass=true"), "{out}");
    let report = fs::read_to_string(dir.path().join("synthetic.fit_decay.txt")).unwrap();
    assert!(report.contains("r2=1.000000"));

    let rows: String = (0..=200).map(|i| format!("{i},{:e}\n", (1.0 + i as f64).powi(-1))).collect();
    let slow = write(dir.path(), "slow.csv", &format!("t,E_total\n{rows}"));
    let o = viscobeam(&["fit-decay", cfg.to_str().unwrap(), "--csv", slow.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn fit_decay_with_five_rows_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "short.csv", "t,E_total\n0,1\n1,0.25\n2,0.11\n3,0.0625\n4,0.04\n");
    let cfg = write(dir.path(), "a.toml", &short_run(""));
    let o = viscobeam(&["fit-decay", cfg.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn convergence_passes_on_smooth_data_and_flags_a_kink() {
    let smooth = viscobeam(&["convergence", configs_dir().join("convergence_smooth.toml").to_str().unwrap()]);
    let out = stdout(&smooth);
    assert_eq!(smooth.status.code(), Some(0), "{out}");
    assert!(out.lines().any(|l| l.starts_with("warning=dt = 0.02 exceeds the stability hint")));
    assert!(out.contains("pass=true"));
    let hat = viscobeam(&["convergence", configs_dir().join("convergence_hat.toml").to_str().unwrap()]);
    assert_eq!(hat.status.code(), Some(1));
    assert!(stdout(&hat).contains("pass=false"));
}

#[test]
fn shipped_configs_parse() {
    let mut count = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            count += 1;
        }
    }
    assert!(count >= 6);
}

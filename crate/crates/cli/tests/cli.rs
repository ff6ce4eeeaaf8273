use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use resonat_core::grid::{build_disk_grid, WaveContext};
use serde_json::Value;
use tempfile::TempDir;

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn resonat(command: &str, config: &Path, out: &Path, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_resonat"));
    cmd.arg(command).arg("--config").arg(config).arg("--out").arg(out);
    cmd.env_remove("RESONAT_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

struct Run {
    _tmp: TempDir,
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exit code")
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn ok(self) -> Self {
        assert_eq!(self.code(), 0, "stderr: {}", self.stderr());
        self
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }

    fn csv(&self, name: &str) -> Vec<BTreeMap<String, String>> {
        let mut r = csv::Reader::from_path(self.out.join(name)).unwrap();
        let h = r.headers().unwrap().clone();
        r.records().map(|rec| h.iter().zip(rec.unwrap().iter()).map(|(a, b)| (a.into(), b.into())).collect()).collect()
    }

    fn files(&self) -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(&self.out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
            })
            .collect()
    }
}

fn run_text(command: &str, text: &str, env: &[(&str, &str)]) -> Run {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("scenario.toml");
    std::fs::write(&config, text).unwrap();
    let out = tmp.path().join("out");
    let output = resonat(command, &config, &out, env);
    Run { _tmp: tmp, out, output }
}

fn run_example(command: &str, name: &str) -> Run {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let output = resonat(command, &example(name), &out, &[]);
    Run { _tmp: tmp, out, output }
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

const DISK: &str = "seed = 1\n[wave]\nk = 1.0\ndim = 2\n\n[domain]\nradius = 1.5\ncells = 10\n";

#[test]
fn spectrum_count_and_order() {
    let r = run_example("spectrum", "spectrum_disk.toml").ok();
    let rows = r.csv("spectrum.csv");
    let expected = build_disk_grid(2.0, 16, &WaveContext::new(1.0, 2).unwrap()).unwrap().len();
    assert_eq!(rows.len(), expected);
    let moduli: Vec<f64> = rows.iter().map(|x| f(&x["re_lambda"]).hypot(f(&x["im_lambda"]))).collect();
    for w in moduli.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
    }
    let m = r.json("manifest.json");
    assert_eq!(m["results"]["count"], expected);
    assert!(r.out.join("mode_10.csv").exists());
    for c in m["results"]["mode_checks"].as_array().unwrap() {
        assert!(c["residual"].as_f64().unwrap() < 1e-10);
    }
}

#[test]
fn manifest_contract() {
    let r = run_text("spectrum", DISK, &[]).ok();
    let text = std::fs::read_to_string(r.out.join("manifest.json")).unwrap();
    let m: Value = serde_json::from_str(&text).unwrap();
    for key in ["config_sha256", "library_version", "seed", "tolerances", "command"] {
        assert!(m.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["tolerances"]["cluster_tol"].as_f64().unwrap() > 0.0);
    // keys are written in sorted order
    let keys: Vec<&String> = m.as_object().unwrap().keys().collect();
    let positions: Vec<usize> = keys.iter().map(|k| text.find(&format!("\n  \"{k}\"")).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn malformed_key_is_a_config_error() {
    let r = run_text("spectrum", &format!("{DISK}colour = 3\n"), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("line 9"), "{}", r.stderr());
    assert!(r.stderr().contains("colour"));

    let r = run_text("spectrum", &DISK.replace("cells = 10", "cells = 1"), &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("scenario.toml:8: domain.cells"), "{}", r.stderr());

    let r = run_text("spectrum", "[wave\nk = 1", &[]);
    assert_eq!(r.code(), 2);

    let r = run_text("image", DISK, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("[image]"), "{}", r.stderr());
}

#[test]
fn expand_tau_zero() {
    let r = run_text("expand", &format!("{DISK}[contrast]\ntau = 0.0\n"), &[]).ok();
    let curve = r.csv("truncation_curve.csv");
    assert_eq!(curve.len(), r.json("manifest.json")["grid"]["points"].as_u64().unwrap() as usize + 1);
    assert!(curve.iter().all(|x| f(&x["rel_error"]) == 0.0));
    let m = r.json("manifest.json");
    assert_eq!(m["results"]["alpha_mass"], 0.0);
    assert!(m["results"]["z"].is_null());
    assert!(r.csv("alpha.csv").iter().all(|x| f(&x["re"]) == 0.0 && f(&x["im"]) == 0.0));
}

#[test]
fn expand_default_disk_oracle() {
    let r = run_example("expand", "expand_disk.toml").ok();
    let m = r.json("manifest.json");
    let n = m["grid"]["points"].as_u64().unwrap();
    assert!((150..=400).contains(&n));
    assert!(m["results"]["oracle_relative_error_alpha"].as_f64().unwrap() <= 1e-7);
    assert!(m["results"]["oracle_relative_error_beta"].as_f64().unwrap() <= 1e-6);
    let curve = r.csv("truncation_curve.csv");
    assert_eq!(f(&curve[0]["rel_error"]), 1.0);
    assert!(f(&curve.last().unwrap()["rel_error"]) <= 1e-7);
    assert_eq!(r.csv("tau_sweep.csv").len(), 4);
}

#[test]
fn expand_near_resonance_fails() {
    let text = "seed = 1\n[wave]\nk = 1.0\ndim = 2\n[domain]\nradius = 2.0\ncells = 16\n\
                [contrast]\nnear_mode = 100\nresonance_tol = 1e-3\n";
    let r = run_text("expand", text, &[]);
    assert_eq!(r.code(), 1, "{}", r.stderr());
    assert!(r.stderr().contains("resonance proximity"), "{}", r.stderr());
}

#[test]
fn psf_homogeneous_width_3d() {
    let r = run_example("psf", "psf_homogeneous_3d.toml").ok();
    let rep = r.json("fwhm_report.json");
    let w = rep["fwhm_homogeneous"].as_f64().unwrap();
    assert!((w - 3.7910).abs() <= 0.02 * 3.7910, "{w}");
    assert_eq!(rep["ratio"], 1.0);
    let rows = r.csv("psf_homogeneous.csv");
    // off the source the grid samples are the closed-form values
    for x in rows.iter().filter(|x| f(&x["r"]) != 0.0) {
        assert!((f(&x["value"]) - f(&x["oracle_value"])).abs() < 1e-14);
    }
}

#[test]
fn psf_superresolution_example() {
    let r = run_example("psf", "psf_superres.toml").ok();
    let rep = r.json("fwhm_report.json");
    let ratio = rep["ratio"].as_f64().unwrap();
    assert!(ratio > 0.0 && ratio < 1.0, "{ratio}");
    let m = r.json("manifest.json");
    let lam = &m["results"]["near_mode"]["eigenvalue"];
    assert!(lam[0].as_f64().unwrap().hypot(lam[1].as_f64().unwrap()) < 1.0);
    assert!(r.out.join("psf_high_contrast.csv").exists());
}

const IMAGE: &str = "seed = 5\n[wave]\nk = 1.0\ndim = 2\n[domain]\nradius = 2.0\ncells = 12\n\
                     [surface]\nradius = 40.0\npoints = 48\n[[source]]\nposition = [0.5, -0.5]\n";

#[test]
fn time_reversal_locates_single_source() {
    let r = run_text("image", &format!("{IMAGE}[image]\nmethods = [\"time_reversal\"]\n"), &[]).ok();
    let m = r.json("metrics.json");
    let tr = &m["methods"]["time_reversal"];
    let h = r.json("manifest.json")["grid"]["cell_size"].as_f64().unwrap();
    assert!(tr["localization_errors"][0].as_f64().unwrap() <= h * 2f64.sqrt());
    let img = r.csv("image_time_reversal.csv");
    let grid = r.csv("grid.csv");
    let best = (0..img.len()).max_by(|&a, &b| f(&img[a]["magnitude"]).total_cmp(&f(&img[b]["magnitude"]))).unwrap();
    let (x, y) = (f(&grid[best]["x"]), f(&grid[best]["y"]));
    assert!((x - 0.5).hypot(y + 0.5) <= h * 2f64.sqrt());
}

#[test]
fn morozov_infeasible_level() {
    let text = format!("{IMAGE}[image]\nmethods = [\"l2_morozov\"]\nmorozov_delta = 1e6\n");
    let r = run_text("image", &text, &[]);
    assert_eq!(r.code(), 1);
    assert!(r.stderr().contains("infeasible"), "{}", r.stderr());
    // noiseless data and no explicit level
    let r = run_text("image", &format!("{IMAGE}[image]\nmethods = [\"l2_morozov\"]\n"), &[]);
    assert_eq!(r.code(), 1);
}

#[test]
fn image_is_deterministic() {
    let text = format!(
        "{IMAGE}[image]\nmethods = [\"time_reversal\", \"l2_tikhonov\", \"l2_morozov\", \"l1\"]\n\
         noise_level = 0.05\ntikhonov_alpha = 1e-4\nl1_max_iters = 300\n"
    );
    let a = run_text("image", &text, &[]).ok();
    let b = run_text("image", &text, &[("RESONAT_THREADS", "1")]).ok();
    assert_eq!(a.files(), b.files());
    let m = a.json("metrics.json");
    let morozov = &m["methods"]["l2_morozov"];
    assert!(morozov["alpha"].as_f64().unwrap() > 0.0);
    assert!(m["methods"]["l1"]["mu"].as_f64().unwrap() > 0.0);
    let res = morozov["residual"].as_f64().unwrap();
    let delta = morozov["delta"].as_f64().unwrap();
    assert!((0.9 * delta..=1.1 * delta).contains(&(res * res)));
    // a different seed changes the data
    let c = run_text("image", &text.replace("seed = 5", "seed = 6"), &[]).ok();
    assert_ne!(a.files()["data.csv"], c.files()["data.csv"]);
}

#[test]
fn thread_variable_validated() {
    let r = run_text("spectrum", DISK, &[("RESONAT_THREADS", "zero")]);
    assert_eq!(r.code(), 2);
}

#[test]
fn hk_single_radius_and_center() {
    let text = format!("{DISK}[hk]\nradii = [30.0]\npoints = 256\nx = [0.0, 0.0]\ny = [0.0, 0.0]\n");
    let r = run_text("hk-check", &text, &[]).ok();
    let rows = r.csv("hk.csv");
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["ratio"], "");
    assert!(f(&rows[0]["residual"]).is_finite());
}

#[test]
fn hk_sweep_rows_and_medium() {
    let r = run_example("hk-check", "hk_check_3d.toml").ok();
    let rows = r.csv("hk.csv");
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|x| f(&x["ratio"]).is_finite()));
    let text = format!(
        "{DISK}[contrast]\ntau = 0.5\n[hk]\nradii = [10.0, 20.0]\npoints = 512\nx = [0.2, 0.1]\ny = [-0.3, 0.0]\n\
         medium = \"high_contrast\"\n"
    );
    let r = run_text("hk-check", &text, &[]).ok();
    let rows = r.csv("hk.csv");
    assert!(f(&rows[1]["residual"]) < f(&rows[0]["residual"]));
}

#[test]
fn sweep_needs_separations() {
    let text = format!("{DISK}[surface]\nradius = 30.0\n[sweep]\nseparations = []\n");
    let r = run_text("sweep-separation", &text, &[]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("sweep.separations"));
}

#[test]
fn sweep_two_wavelengths_succeeds() {
    let r = run_example("sweep-separation", "sweep_two_wavelengths.toml").ok();
    let rows = r.csv("sweep.csv");
    assert_eq!(rows.len(), 2);
    for x in &rows {
        assert_eq!(x["medium_tag"], "homogeneous");
        assert_eq!(x["success_flag"], "true", "{x:?}");
    }
    let two = f(&rows[1]["separation"]);
    assert!((two - 4.0 * std::f64::consts::PI).abs() <= 0.5);
}

#[test]
fn sweep_is_deterministic() {
    let text = format!(
        "{DISK}[contrast]\ntau = 0.5\n[surface]\nradius = 30.0\npoints = 32\n\
         [sweep]\nseparations = [1.0, 2.0]\nnoise_level = 0.01\nl1_max_iters = 400\n"
    );
    let a = run_text("sweep-separation", &text, &[]).ok();
    let b = run_text("sweep-separation", &text, &[("RESONAT_THREADS", "2")]).ok();
    assert_eq!(a.files(), b.files());
    let tags: Vec<String> = a.csv("sweep.csv").iter().map(|x| x["medium_tag"].clone()).collect();
    assert_eq!(tags, ["homogeneous", "homogeneous", "high_contrast", "high_contrast"]);
}

#[test]
fn out_flag_overrides_config_output() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("s.toml");
    std::fs::write(&config, format!("output = \"{}\"\n{DISK}", tmp.path().join("cfg").display())).unwrap();
    let out = tmp.path().join("flag");
    assert!(resonat("spectrum", &config, &out, &[]).status.success());
    assert!(out.join("manifest.json").exists());
    assert!(!tmp.path().join("cfg").exists());
}

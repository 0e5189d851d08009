use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use perishape::config::{FunctionalConfig, ShapeConfig};
use perishape::output::{read_checkpoint, read_field};
use perishape::{parse_str, ConfigError};
use perishape_core::FunctionalSpec;

const MINIMAL: &str = "[grid]\nh = 1/32\nhalf_width = 1.6\n\n[objective]\nfunctional = perimeter\nm = pi\n";

fn perishape(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_perishape"))
        .arg("--config")
        .arg(&cfg)
        .args(extra)
        .env("PERISHAPE_LOG", "quiet")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header_hash(path: &Path) -> String {
    let bytes = fs::read(path).unwrap();
    let line = bytes.split(|&b| b == b'\n').next().unwrap();
    let line = String::from_utf8_lossy(line);
    assert!(line.contains("perishape 0.1.0"), "{}: {line}", path.display());
    line.split("sha256:").nth(1).unwrap().trim_end_matches(" -->").trim().to_string()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn minimal_config_fills_defaults_and_headers_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let o = perishape(tmp.path(), MINIMAL, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("perishape-out");
    let effective = fs::read_to_string(out.join("effective_config.txt")).unwrap();
    for key in ["max_iters = 400", "cfl = 0.45", "kind = ellipse", "mu = 1", "checks = torsion"] {
        assert!(effective.contains(key), "missing `{key}`");
    }
    let names: Vec<String> = files(&out).iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["effective_config.txt", "final.lsf", "final.svg", "summary.txt", "trace.csv"]);
    let cfg = perishape::parse_config(&tmp.path().join("run.cfg")).unwrap();
    for f in files(&out) {
        assert_eq!(header_hash(&f), cfg.hash());
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("converged = true"));
    let p: f64 = summary.lines().find_map(|l| l.strip_prefix("perimeter = ")).unwrap().parse().unwrap();
    assert!((p - 2.0 * std::f64::consts::PI).abs() < 0.02 * 2.0 * std::f64::consts::PI);
    let svg = fs::read_to_string(out.join("final.svg")).unwrap();
    assert!(svg.contains("<polygon") && svg.contains("<rect"));
    let field = read_field(&out.join("final.lsf")).unwrap();
    assert_eq!(field.grid().h, 1.0 / 32.0);
}

#[test]
fn unknown_key_names_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let o = perishape(tmp.path(), &format!("{MINIMAL}muu = 3\n"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("line 8") && e.contains("`muu`"), "{e}");
    let err = parse_str("[grid]\nh = 1/32\nhalf_widht = 1\n", Path::new(".")).unwrap_err();
    assert!(matches!(err, ConfigError::Invalid { .. } | ConfigError::UnknownKey { .. }), "{err}");
    let err = parse_str(&format!("{MINIMAL}[shape]\nkind = disk\nradius = 1\na = 2\n"), Path::new(".")).unwrap_err();
    assert!(matches!(err, ConfigError::UnknownKey { line: 11, ref key, .. } if key == "a"), "{err}");
}

#[test]
fn validation_errors_name_the_invariant() {
    let base = Path::new(".");
    let cases = [
        ("[grid]\nh = -1\nhalf_width = 1\n[objective]\nm = 1\n", "grid.h must be positive"),
        ("[grid]\nh = 1/32\nhalf_width = 1.5\n[objective]\nm = 0\n", "target volume must be positive"),
        ("[grid]\nh = 1/32\nhalf_width = 1.5\n[objective]\nm = 1\nfunctional = spectral\nweights = 0, 1\nk = 3\n", "must equal the number of weights"),
        ("[grid]\nh = 1/32\nhalf_width = 1.5\n[objective]\nm = 1\n[optimizer]\ncfl = 0.6\n", "cfl fraction"),
        ("[grid]\nh = 1/32\nhalf_width = 1.5\n[objective]\nm = 1\n[shape]\nkind = file\npath = nowhere.lsf\n", "does not exist"),
        ("[grid]\nh = 1/32\nhalf_width = 1.5\n[objective]\nm = 1\n[verify]\nchecks = cut\n", "no cut_balls"),
        ("[grid]\nh = 1/32\nhalf_width = 1.5\n[objective]\nm = 1\n[run]\ncommand = sweep\n", "largest ball must fit"),
        ("[grid]\nh = 1/32\nhalf_width = 1.5\n", "objective.m"),
        ("[objectiv]\nm = 1\n", "unknown section"),
        ("[grid]\nh = 1/32\nh = 1/16\n", "repeats line 2"),
    ];
    for (text, needle) in cases {
        let err = parse_str(text, base).unwrap_err().to_string();
        assert!(err.contains(needle), "`{err}` should mention `{needle}`");
    }
}

#[test]
fn spectral_weights_select_the_third_eigenvalue() {
    let text = "[grid]\nh = 1/32\nhalf_width = 1.5\n[objective]\nfunctional = spectral\nweights = 0, 0, 1\nk = 3\nm = pi\n";
    let cfg = parse_str(text, Path::new(".")).unwrap();
    assert_eq!(cfg.objective.functional, FunctionalConfig::Spectral(vec![0.0, 0.0, 1.0]));
    assert!(matches!(cfg.objective.functional.spec().unwrap(), FunctionalSpec::Spectral(w) if w == [0.0, 0.0, 1.0]));
    let k_only = parse_str(&text.replace("weights = 0, 0, 1\n", ""), Path::new(".")).unwrap();
    assert_eq!(k_only.objective.functional, cfg.objective.functional);
}

#[test]
fn effective_config_parses_back_to_the_same_run() {
    let text = "[run]\ncommand = verify\nseed = 9\n[grid]\nh = 1/48\nbounds = -1.5, 1.5, -1.2, 1.2\n[shape]\nkind = square\nside = 1\n\
                [objective]\nfunctional = energy\nsource = dipole\nsource_amplitude = 4\nsource_width = 0.5\nm = 1\nmu = 2\n\
                [verify]\nchecks = cut, local_optimality\ncut_balls = 0.5, 0, 0.2; 0, 0.5, 0.1\ncut_half_spaces = 1, 0, 0.3\n";
    let cfg = parse_str(text, Path::new(".")).unwrap();
    let again = parse_str(&cfg.effective(), Path::new(".")).unwrap();
    assert_eq!(again.effective(), cfg.effective());
    assert_eq!(again.hash(), cfg.hash());
    assert_eq!(again.verify.cutters.len(), 3);
    assert_eq!(again.shape, ShapeConfig::Square { center: [0.0, 0.0], side: 1.0 });
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let o = perishape(tmp.path(), MINIMAL, &["--threads", "1", "--out", dir.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn checkpoint_and_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let first = format!("{MINIMAL}[run]\ncheckpoint_every = 10\n[optimizer]\nmax_iters = 25\n");
    let o = perishape(tmp.path(), &first, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = tmp.path().join("perishape-out");
    let ckpt = out.join("checkpoint.ckpt");
    let (c, hash) = read_checkpoint(&ckpt).unwrap();
    assert_eq!(c.iteration, 20);
    assert!(c.mu > 0.0 && c.step > 0.0);
    assert_eq!(hash.unwrap(), header_hash(&out.join("trace.csv")));

    let second = first.replace("max_iters = 25", "max_iters = 40");
    let resumed = tmp.path().join("resumed");
    let o = perishape(tmp.path(), &second, &["--resume", ckpt.to_str().unwrap(), "--out", resumed.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = fs::read_to_string(resumed.join("trace.csv")).unwrap();
    let first_row = trace.lines().nth(2).unwrap();
    assert!(first_row.starts_with("21,"), "{first_row}");
    assert!(trace.lines().last().unwrap().starts_with("40,"));

    let bad = tmp.path().join("bad.ckpt");
    fs::write(&bad, b"# header\nnot a checkpoint\n").unwrap();
    let o = perishape(tmp.path(), &second, &["--resume", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing checkpoint line"));
}

#[test]
fn verify_batch_exit_status_follows_the_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let disk = "[run]\ncommand = verify\n[grid]\nh = 1/64\nhalf_width = 1.2\n[shape]\nkind = disk\nradius = 1\n\
                [objective]\nm = pi\n[verify]\ncut_balls = 1, 0, 0.2\ncut_half_spaces = 1, 0, 0.8\n\
                checks = torsion, faber_krahn, isoperimetric, supersolution, cut\n";
    let o = perishape(tmp.path(), disk, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(tmp.path().join("perishape-out/checks.csv")).unwrap();
    assert!(csv.lines().next().unwrap().starts_with("# perishape"));
    assert_eq!(csv.lines().count(), 2 + 8);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("8 checks, 8 passed, 0 failed"), "{stdout}");

    let annulus = disk.replace("kind = disk\nradius = 1", "kind = annulus\ninner = 0.5\nouter = 1").replace(
        "checks = torsion, faber_krahn, isoperimetric, supersolution, cut",
        "checks = supersolution",
    );
    let o = perishape(tmp.path(), &annulus, &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn sweep_reproduces_the_ball_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "[run]\ncommand = sweep\n[grid]\nh = 1/32\nhalf_width = 2.2\n[objective]\nfunctional = spectral\nm = pi\n\
                [sweep]\nr_min = 0.5\nr_max = 2\ncount = 7\n";
    let o = perishape(tmp.path(), text, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(tmp.path().join("perishape-out/summary.txt")).unwrap();
    let value = |key: &str| -> f64 {
        summary.lines().find_map(|l| l.strip_prefix(key)).unwrap().trim_start_matches(" = ").parse().unwrap()
    };
    assert!(value("max_profile_error") < 0.02);
    let r = value("minimiser_radius");
    assert!((r - value("reference_minimiser_radius")).abs() < 0.1, "{r}");
    let csv = fs::read_to_string(tmp.path().join("perishape-out/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 7);
}

#[test]
fn report_reads_a_saved_field() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(perishape(tmp.path(), MINIMAL, &[]).status.code(), Some(0));
    let text = "[run]\ncommand = report\nout = rep\n[objective]\nfunctional = energy\nm = pi\n[report]\nfield = perishape-out/final.lsf\n";
    let o = perishape(tmp.path(), text, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(tmp.path().join("rep/summary.txt")).unwrap();
    let g: f64 = summary.lines().find_map(|l| l.strip_prefix("G = ")).unwrap().parse().unwrap();
    // Near-disk of area π: torsion energy close to −π/16.
    assert!((g + std::f64::consts::PI / 16.0).abs() < 0.01, "{g}");
    assert!(tmp.path().join("rep/report.svg").is_file());
}

#[test]
fn csv_shape_files_are_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let g = perishape_core::GridSpec::centered([0.0, 0.0], 1.6, 1.0 / 32.0).unwrap();
    let set = perishape_core::Shape::disk([0.0, 0.0], 1.0).rasterize(&g).unwrap();
    let mut buf = Vec::new();
    set.write_csv(&mut buf).unwrap();
    fs::write(tmp.path().join("disk.csv"), buf).unwrap();
    let text = format!("{MINIMAL}[run]\ncommand = verify\n[shape]\nkind = file\npath = disk.csv\n[verify]\nchecks = isoperimetric\n");
    let o = perishape(tmp.path(), &text, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn runtime_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{MINIMAL}[shape]\nkind = disk\nradius = 3\n");
    let o = perishape(tmp.path(), &text, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("perishape: error:"), "{}", stderr(&o));

    let cfg = tmp.path().join("run.cfg");
    let o = Command::new(env!("CARGO_BIN_EXE_perishape"))
        .arg("--config")
        .arg(&cfg)
        .env("PERISHAPE_LOG", "loud")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("PERISHAPE_LOG"));
    let o = Command::new(env!("CARGO_BIN_EXE_perishape")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for f in files(&dir) {
        let text = fs::read_to_string(&f).unwrap();
        match parse_str(&text, &dir) {
            Ok(cfg) => assert!(!cfg.effective().is_empty()),
            // The report config points at the output of a solve run.
            Err(ConfigError::Invalid { message, .. }) if message.contains("does not exist") => {
                assert!(f.ends_with("report.cfg"))
            }
            Err(e) => panic!("{}: {e}", f.display()),
        }
    }
}

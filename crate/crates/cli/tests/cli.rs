use std::f64::consts::PI;
use std::process::{Command, Output};

use serde_json::Value;
use so3tp::coupling::CouplingScalars;

fn so3tp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_so3tp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn coeffs_lmax_one_has_five_triplets() {
    let v = stdout_json(&so3tp(&["coeffs", "--lmax", "1"]));
    let records = v["records"].as_array().unwrap();
    let triplets: Vec<(u64, u64, u64)> = records
        .iter()
        .map(|r| {
            (
                r["l1"].as_u64().unwrap(),
                r["l2"].as_u64().unwrap(),
                r["l3"].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(triplets, vec![(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1)]);
    let r111 = &records[4];
    assert_eq!(r111["parity"], "odd");
    assert_eq!(r111["G_tilde"].as_f64().unwrap(), 0.0);
    assert!((r111["V_tilde"].as_f64().unwrap() - (1.5 / PI).sqrt()).abs() < 1e-12);
    assert!(v["header"]["m_ordering"].as_str().unwrap().contains("row-major"));
}

#[test]
fn coeffs_lmax_zero_is_single_scalar() {
    let v = stdout_json(&so3tp(&["coeffs", "--lmax", "0"]));
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 1);
    let g = records[0]["G_tilde"].as_f64().unwrap();
    assert!((g - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-14);
}

#[test]
fn negative_lmax_is_a_usage_error() {
    let out = so3tp(&["coeffs", "--lmax", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(so3tp(&["coeffs", "--lmax", "1", "--bogus"]).status.code(), Some(2));
    assert_eq!(
        so3tp(&["coeffs", "--lmax", "1", "--quadrature", "lebedev"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn table_file_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("table.json");
    let out = so3tp(&["coeffs", "--lmax", "3", "--blocks", "--output", path.to_str().unwrap()]);
    assert!(out.status.success());
    let table = CouplingScalars::read(&path).unwrap();
    assert_eq!(table.len(), 34);
    assert_eq!(table.cg_blocks.as_ref().unwrap().len(), 34);

    let again = dir.path().join("again.json");
    table.write(&again).unwrap();
    assert!(
        std::fs::read(&path).unwrap() == std::fs::read(&again).unwrap(),
        "rewritten table differs"
    );
    assert_eq!(CouplingScalars::read(&again).unwrap(), table);
}

#[test]
fn design_quadrature_reproduces_gauss_table() {
    let design = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/data/icosahedron_t5.txt");
    let q = format!("design:{design}");
    let gauss = stdout_json(&so3tp(&["coeffs", "--lmax", "1"]));
    let ico = stdout_json(&so3tp(&["coeffs", "--lmax", "1", "--quadrature", &q]));
    for (a, b) in gauss["records"]
        .as_array()
        .unwrap()
        .iter()
        .zip(ico["records"].as_array().unwrap())
    {
        for key in ["G_tilde", "V_tilde"] {
            let (x, y) = (a[key].as_f64().unwrap(), b[key].as_f64().unwrap());
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{key}: {x} vs {y}");
        }
    }
    // degree 5 cannot integrate the sums up to 6 needed at lmax 2
    assert_eq!(
        so3tp(&["coeffs", "--lmax", "2", "--quadrature", &q]).status.code(),
        Some(2)
    );
}

#[test]
fn verify_passes_and_reports_json() {
    let out = so3tp(&["verify", "--lmax", "3", "--pairs", "2"]);
    let v = stdout_json(&out);
    assert_eq!(v["passed"], true);
    assert!(v["checks"].as_array().unwrap().len() >= 10);
}

#[test]
fn verify_lmax_zero_passes() {
    let v = stdout_json(&so3tp(&["verify", "--lmax", "0"]));
    assert_eq!(v["passed"], true);
}

#[test]
fn injected_sign_flip_fails_with_triplet() {
    let out = so3tp(&["verify", "--lmax", "3", "--pairs", "2", "--inject-flip", "1,1,1"]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], false);
    let closed = v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "closed_form_vtilde")
        .unwrap();
    assert_eq!(closed["failures"], serde_json::json!([{"l1": 1, "l2": 1, "l3": 1}]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(1, 1, 1)"));
}

#[test]
fn tp_methods_agree_up_to_gamma() {
    let args = |m: &str| {
        vec![
            "tp",
            "--method",
            m,
            "--l1",
            "1",
            "--l2",
            "2",
            "--l3",
            "2",
            "--h1",
            "[0.3,-1.2,0.5]",
            "--h2",
            "[1,0.5,-0.25,2,-1]",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>()
    };
    let run = |m: &str| {
        let a = args(m);
        let v = stdout_json(&so3tp(&a.iter().map(String::as_str).collect::<Vec<_>>()));
        v["output"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect::<Vec<f64>>()
    };
    let (cg, gt, vs, co) = (run("cgtp"), run("gtp"), run("vstp"), run("combined"));
    let table = stdout_json(&so3tp(&["coeffs", "--lmax", "2"]));
    let gamma = table["records"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["l1"] == 1 && r["l2"] == 2 && r["l3"] == 2)
        .unwrap()["Gamma"]
        .as_f64()
        .unwrap();
    let scale = cg.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for i in 0..5 {
        assert!(gt[i].abs() < 1e-12, "odd path has no Gaunt part");
        assert!((co[i] - gt[i] - vs[i]).abs() < 1e-12);
        assert!((gamma * co[i] - cg[i]).abs() < 1e-10 * scale);
    }
}

#[test]
fn tp_rejects_bad_inputs() {
    let base = [
        "tp", "--method", "cgtp", "--l1", "1", "--l2", "1", "--l3", "1", "--h2", "[1,0,0]", "--h1",
    ];
    let with = |h1: &str| {
        let mut a = base.to_vec();
        a.push(h1);
        so3tp(&a).status.code()
    };
    assert_eq!(with("[1,0]"), Some(2));
    assert_eq!(with("not json"), Some(2));
    let inadmissible = so3tp(&[
        "tp", "--method", "cgtp", "--l1", "0", "--l2", "0", "--l3", "1", "--h1", "[1]", "--h2", "[1]",
    ]);
    assert_eq!(inadmissible.status.code(), Some(2));
}

#[test]
fn fit_norm_emits_json_and_sweep_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = so3tp(&[
        "fit-norm",
        "--target",
        "vtilde",
        "--lmax",
        "5",
        "--rank",
        "2",
        "--restarts",
        "2",
        "--sweep-lmax",
        "3,5",
        "--sweep-ranks",
        "1,2",
        "--sweep-csv",
        csv.to_str().unwrap(),
    ]);
    let v = stdout_json(&out);
    for key in ["factors", "sigma_log", "frac_within_2x", "r_squared"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v["sigma_log"].as_f64().unwrap() < 0.05);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert!(lines[0].starts_with("Lmax,rank,sigma_log"));
    assert_eq!(lines.len(), 5);
}

#[test]
fn fit_norm_is_deterministic() {
    let args = [
        "fit-norm", "--target", "gamma", "--lmax", "4", "--rank", "3", "--seed", "7",
    ];
    assert_eq!(so3tp(&args).stdout, so3tp(&args).stdout);
}

#[test]
fn bench_emits_csv_columns() {
    let out = so3tp(&["bench", "--l-values", "1,2", "--repeats", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("method,L,R,median_seconds"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let secs: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(secs > 0.0);
    }
}

#[test]
fn bench_rejects_descending_l() {
    assert_eq!(so3tp(&["bench", "--l-values", "4,2"]).status.code(), Some(2));
}

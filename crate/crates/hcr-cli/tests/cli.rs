//! End-to-end checks of the command surface: flag handling, exit codes,
//! file outputs, and determinism.

mod common;

use common::{dependent_raw, run, workdir, write_series_csv};
use hcr::report::{parse_coefficient_table, parse_eval_report, parse_grid};
use hcr::Model;

fn path_str(p: &std::path::Path) -> String {
    p.to_str().expect("utf-8 path").to_string()
}

#[test]
fn fit_writes_a_loadable_model() {
    let dir = workdir("cli-fit");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(1, 500));
    let model_path = dir.join("model.txt");
    let (code, stdout, stderr) = run(&[
        "fit",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--degree",
        "3",
        "--order",
        "1",
        "--output",
        &path_str(&model_path),
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stdout.contains("fit:"), "{stdout}");

    let model = Model::from_text(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    assert_eq!(model.config.degree, 3);
    assert_eq!(model.config.order, 1);
    assert_eq!(model.coeffs.len(), 256);
    assert_eq!(model.coeffs.sample_size(), 499);
}

#[test]
fn eval_is_deterministic_for_a_fixed_seed() {
    let dir = workdir("cli-eval-determinism");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(2, 700));
    let out1 = dir.join("r1.csv");
    let out2 = dir.join("r2.csv");
    let out3 = dir.join("r3.csv");
    let mut args = vec![
        "eval",
        "--input",
        &path_str(&csv) as &str,
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--degree",
        "4",
        "--order",
        "0",
        "--seed",
        "7",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    let base = args.clone();
    args.extend(["--output".into(), path_str(&out1)]);
    let (code, _, stderr) = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code, 0, "{stderr}");

    let mut again = base.clone();
    again.extend(["--output".into(), path_str(&out2)]);
    run(&again.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out2).unwrap(),
        "same seed must give identical bytes"
    );

    let mut other_seed: Vec<String> = base
        .iter()
        .map(|s| if s == "7" { "8".to_string() } else { s.clone() })
        .collect();
    other_seed.extend(["--output".into(), path_str(&out3)]);
    run(&other_seed.iter().map(String::as_str).collect::<Vec<_>>());
    assert_ne!(
        std::fs::read(&out1).unwrap(),
        std::fs::read(&out3).unwrap(),
        "different seeds split differently"
    );

    let (report, config) =
        parse_eval_report(&std::fs::read_to_string(&out1).unwrap()).unwrap();
    assert_eq!(report.seed, Some(7));
    assert_eq!(config.unwrap().degree, 4);
    assert_eq!(report.n_train + report.n_test, 700);
}

#[test]
fn eval_accepts_a_model_file_and_rejects_conflicts() {
    let dir = workdir("cli-eval-model");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(3, 400));
    let model_path = dir.join("model.txt");
    run(&[
        "fit",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--degree",
        "2",
        "--output",
        &path_str(&model_path),
    ]);

    let report_path = dir.join("report.csv");
    let (code, _, stderr) = run(&[
        "eval",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--model",
        &path_str(&model_path),
        "--output",
        &path_str(&report_path),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let (report, _) = parse_eval_report(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    // Model mode evaluates every context vector of the input.
    assert_eq!(report.n_test, 400);

    let (code, _, stderr) = run(&[
        "eval",
        "--input",
        &path_str(&csv),
        "--model",
        &path_str(&model_path),
        "--degree",
        "3",
        "--output",
        &path_str(&report_path),
    ]);
    assert_eq!(code, 1, "conflicting flags must be a usage error: {stderr}");
    assert!(stderr.contains("conflicts"), "{stderr}");
}

#[test]
fn data_and_numeric_errors_use_distinct_exit_codes() {
    let dir = workdir("cli-exit-codes");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(4, 50));
    let out = dir.join("out");

    // Unknown column: data error.
    let (code, _, stderr) = run(&[
        "eval",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,missing",
        "--degree",
        "2",
        "--output",
        &path_str(&out),
    ]);
    assert_eq!(code, 2, "{stderr}");

    // Constant column: degenerate scale, numeric error.
    std::fs::write(dir.join("flat.csv"), "a\n1.0\n1.0\n1.0\n1.0\n1.0\n1.0\n1.0\n1.0\n").unwrap();
    let flat = dir.join("flat.csv");
    let (code, _, stderr) = run(&[
        "fit",
        "--input",
        &path_str(&flat),
        "--columns",
        "a",
        "--degree",
        "1",
        "--output",
        &path_str(&out),
    ]);
    assert_eq!(code, 3, "{stderr}");
    assert!(stderr.contains("degenerate"), "{stderr}");

    // Unknown flag: usage error from the parser.
    let (code, _, _) = run(&["fit", "--no-such-flag"]);
    assert_eq!(code, 1);

    // Missing file: data error.
    let (code, _, _) = run(&[
        "fit",
        "--input",
        "/nonexistent.csv",
        "--columns",
        "a",
        "--degree",
        "1",
        "--output",
        &path_str(&out),
    ]);
    assert_eq!(code, 2);

    // Help exits cleanly.
    let (code, stdout, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("fit"));
}

#[test]
fn topk_emits_the_normalization_row_plus_k() {
    let dir = workdir("cli-topk");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(5, 600));
    let model_path = dir.join("model.txt");
    run(&[
        "fit",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--degree",
        "4",
        "--output",
        &path_str(&model_path),
    ]);
    let table_path = dir.join("top.csv");
    let (code, stdout, stderr) = run(&[
        "topk",
        "--model",
        &path_str(&model_path),
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--k",
        "5",
        "--output",
        &path_str(&table_path),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("baseline sigma"));
    let rows = parse_coefficient_table(&std::fs::read_to_string(&table_path).unwrap()).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].0, vec![0, 0]);
    assert_eq!(rows[0].1, 1.0);
    // The anti-correlated pair dominates the ranking.
    assert_eq!(rows[1].0, vec![1, 1]);
    assert!(rows[1].1 < 0.0);

    // A model with a basis larger than k yields the normalization row plus
    // exactly k ranked rows.
    let wide_model = dir.join("wide.txt");
    run(&[
        "fit",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--degree",
        "9",
        "--order",
        "1",
        "--output",
        &path_str(&wide_model),
    ]);
    let (code, _, stderr) = run(&[
        "topk",
        "--model",
        &path_str(&wide_model),
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--k",
        "100",
        "--output",
        &path_str(&table_path),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let rows = parse_coefficient_table(&std::fs::read_to_string(&table_path).unwrap()).unwrap();
    assert_eq!(rows.len(), 101);
}

#[test]
fn grid_emits_cell_records() {
    let dir = workdir("cli-grid");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(6, 500));
    let model_path = dir.join("model.txt");
    run(&[
        "fit",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--degree",
        "5",
        "--output",
        &path_str(&model_path),
    ]);
    let grid_path = dir.join("grid.csv");
    let (code, _, stderr) = run(&[
        "grid",
        "--model",
        &path_str(&model_path),
        "--pair",
        "0,1",
        "--resolution",
        "10",
        "--output",
        &path_str(&grid_path),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let sheet = parse_grid(&std::fs::read_to_string(&grid_path).unwrap()).unwrap();
    assert_eq!(sheet.resolution, 10);
    assert_eq!(sheet.names.0, "a(t)");
    assert_eq!(sheet.names.1, "b(t)");

    // A pair index outside the model is a usage error.
    let (code, _, _) = run(&[
        "grid",
        "--model",
        &path_str(&model_path),
        "--pair",
        "0,7",
        "--output",
        &path_str(&grid_path),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn normalize_outputs_reconstruct_residuals() {
    let dir = workdir("cli-normalize");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(7, 400));
    let out_dir = dir.join("norm");
    let (code, _, stderr) = run(&[
        "normalize",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--output",
        &path_str(&out_dir),
    ]);
    assert_eq!(code, 0, "{stderr}");
    for file in ["residuals.csv", "uniform.csv", "normalizers.csv", "cdf_a.csv", "cdf_b.csv"] {
        assert!(out_dir.join(file).exists(), "missing {file}");
    }

    // Reconstruction: params + uniform series -> residuals via the quantile.
    let parse_table = |name: &str| -> Vec<Vec<f64>> {
        let text = std::fs::read_to_string(out_dir.join(name)).unwrap();
        text.lines()
            .skip(1)
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect()
    };
    let residuals = parse_table("residuals.csv");
    let uniform = parse_table("uniform.csv");
    let normalizers: Vec<(String, String, f64, f64)> = std::fs::read_to_string(
        out_dir.join("normalizers.csv"),
    )
    .unwrap()
    .lines()
    .skip(1)
    .map(|l| {
        let f: Vec<&str> = l.split(',').collect();
        (
            f[0].to_string(),
            f[1].to_string(),
            f[2].parse().unwrap(),
            f[3].parse().unwrap(),
        )
    })
    .collect();
    let laplace: Vec<hcr::NormalizerParams> = ["a", "b"]
        .iter()
        .map(|name| {
            let row = normalizers
                .iter()
                .find(|(v, kind, _, _)| v == name && kind == "laplace")
                .unwrap();
            hcr::NormalizerParams::new(hcr::NormalizerKind::Laplace, row.2, row.3).unwrap()
        })
        .collect();
    assert_eq!(residuals.len(), 400);
    for (res_row, u_row) in residuals.iter().zip(&uniform) {
        for i in 0..2 {
            let back = laplace[i].quantile(u_row[i]).unwrap();
            assert!(
                (back - res_row[i]).abs() <= 1e-9 * res_row[i].abs().max(laplace[i].scale),
                "reconstruction drift: {back} vs {}",
                res_row[i]
            );
        }
    }
}

#[test]
fn region_reports_uniform_fractions() {
    let dir = workdir("cli-region");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(8, 300));
    let model_path = dir.join("model.txt");
    // Degree 0 forces the uniform density regardless of the data.
    run(&[
        "fit",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--degree",
        "0",
        "--output",
        &path_str(&model_path),
    ]);
    let region_path = dir.join("region.csv");
    let (code, _, stderr) = run(&[
        "region",
        "--model",
        &path_str(&model_path),
        "--threshold",
        "0.5",
        "--resolution",
        "32",
        "--output",
        &path_str(&region_path),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let text = std::fs::read_to_string(&region_path).unwrap();
    assert!(text.contains("method,grid,32"), "{text}");
    assert!(text.contains("volume_fraction,1.0000000000000000e0"), "{text}");
    assert!(text.contains("mass_fraction,1.0000000000000000e0"), "{text}");

    // Mutually exclusive integration flags.
    let (code, _, _) = run(&[
        "region",
        "--model",
        &path_str(&model_path),
        "--threshold",
        "0.5",
        "--resolution",
        "32",
        "--mc-samples",
        "1000",
        "--output",
        &path_str(&region_path),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn from_yields_extracts_factors_before_fitting() {
    let dir = workdir("cli-yields");
    // Synthetic curves from drifting factors at six maturities.
    let maturities = [3.0, 6.0, 12.0, 24.0, 60.0, 120.0];
    let lambda = 0.0609;
    let mut csv = String::from("date,3,6,12,24,60,120\n");
    let mut rng_state = 0.4_f64;
    for t in 0..220 {
        let b1 = 5.0 + 0.3 * (t as f64 / 40.0).sin() + 0.05 * rng_state;
        let b2 = -1.2 + 0.2 * (t as f64 / 23.0).cos();
        let b3 = 0.7 + 0.1 * (t as f64 / 17.0).sin();
        rng_state = (rng_state * 997.0 + 0.171).fract();
        csv.push_str(&format!("d{t}"));
        for &tau in &maturities {
            let x: f64 = lambda * tau;
            let l2 = (1.0 - (-x).exp()) / x;
            let l3 = l2 - (-x).exp();
            csv.push_str(&format!(",{}", b1 + b2 * l2 + b3 * l3));
        }
        csv.push('\n');
    }
    let csv_path = dir.join("yields.csv");
    std::fs::write(&csv_path, csv).unwrap();

    let model_path = dir.join("model.txt");
    let (code, _, stderr) = run(&[
        "fit",
        "--input",
        &path_str(&csv_path),
        "--date-column",
        "date",
        "--from-yields",
        "--columns",
        "b1,b2",
        "--degree",
        "2",
        "--output",
        &path_str(&model_path),
    ]);
    assert_eq!(code, 0, "{stderr}");
    let model = Model::from_text(&std::fs::read_to_string(&model_path).unwrap()).unwrap();
    assert_eq!(model.config.variables, vec!["b1", "b2"]);

    // --lambda without --from-yields is a usage error.
    let (code, _, stderr) = run(&[
        "fit",
        "--input",
        &path_str(&csv_path),
        "--columns",
        "3,6",
        "--lambda",
        "0.5",
        "--degree",
        "1",
        "--output",
        &path_str(&model_path),
    ]);
    assert_eq!(code, 1, "{stderr}");
}

#[test]
fn model_file_reload_is_byte_stable() {
    let dir = workdir("cli-model-bytes");
    let csv = dir.join("data.csv");
    write_series_csv(&csv, &dependent_raw(9, 350));
    let model_path = dir.join("model.txt");
    run(&[
        "fit",
        "--input",
        &path_str(&csv),
        "--date-column",
        "date",
        "--columns",
        "a,b",
        "--degree",
        "3",
        "--order",
        "1",
        "--prune-sigmas",
        "1.0",
        "--output",
        &path_str(&model_path),
    ]);
    let text = std::fs::read_to_string(&model_path).unwrap();
    let model = Model::from_text(&text).unwrap();
    assert_eq!(model.to_text(), text);
    assert!(model.config.prune_sigmas == Some(1.0));
}

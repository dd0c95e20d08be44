use ctdenoise::bench::{emit_csv, run_bench, BenchEngine, BenchPlan, BenchReport, ImageSource};
use ctdenoise::image::GrayImage;
use ctdenoise::pgm::save_pgm;
use ctdenoise::pipeline::Engine;

#[test]
fn mid_gray_noisy_only_matches_table_level() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray.pgm");
    save_pgm(&GrayImage::filled(512, 512, 128), &path, true).unwrap();
    let plan = BenchPlan {
        inputs: vec![ImageSource::File(path)],
        sigmas: vec![10.0],
        engines: vec![BenchEngine::NoisyOnly],
        ..BenchPlan::default()
    };
    let report = run_bench(&plan).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert_eq!(row.image, "gray.pgm");
        assert!((row.psnr_noisy - 28.13).abs() <= 0.3, "{}", row.psnr_noisy);
    }
}

#[test]
fn phantom_sigma_20_both_engines_improve_and_agree() {
    let plan = BenchPlan {
        sigmas: vec![20.0],
        engines: vec![BenchEngine::Denoise(Engine::Exhaustive), BenchEngine::Denoise(Engine::Ga)],
        seeds: vec![1],
        ..BenchPlan::default()
    };
    let report = run_bench(&plan).unwrap();
    let ex = &report.rows[0];
    let ga = &report.rows[1];
    assert!(ex.psnr_denoised.unwrap() > ex.psnr_noisy);
    assert!(ga.psnr_denoised.unwrap() > ga.psnr_noisy);
    assert!((ex.psnr_denoised.unwrap() - ga.psnr_denoised.unwrap()).abs() <= 1.0);
    // 128x128, m = 16, s = 8: 15 x 15 windows, each scanning all 225
    assert_eq!(ex.distance_evals, 225 * 225);
}

#[test]
fn denoised_beats_noisy_up_to_sigma_30() {
    let plan = BenchPlan {
        inputs: vec![ImageSource::Phantom(64)],
        sigmas: vec![10.0, 20.0, 30.0],
        engines: vec![BenchEngine::Denoise(Engine::Exhaustive), BenchEngine::Denoise(Engine::Ga)],
        seeds: vec![1, 2],
        denoise: ctdenoise::pipeline::DenoiseConfig { m: 8, s_size: 4, ..Default::default() }.with_n_c(8),
        ..BenchPlan::default()
    };
    for row in run_bench(&plan).unwrap().rows {
        assert!(row.psnr_denoised.unwrap() > row.psnr_noisy, "{row:?}");
    }
}

#[test]
fn csv_parses_back_to_printed_precision() {
    let plan = BenchPlan {
        inputs: vec![ImageSource::Phantom(32)],
        sigmas: vec![0.0, 12.5, 40.0],
        engines: vec![BenchEngine::NoisyOnly, BenchEngine::Denoise(Engine::Exhaustive)],
        seeds: vec![3],
        denoise: ctdenoise::pipeline::DenoiseConfig { m: 8, s_size: 8, ..Default::default() }.with_n_c(4),
        record_timing: true,
    };
    let report = run_bench(&plan).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out").join("..").join("r.csv");
    std::fs::create_dir(dir.path().join("out")).unwrap();
    emit_csv(&report, &path).unwrap();

    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), BenchReport::COLUMNS);
    let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), report.rows.len());
    let parse = |s: &str| -> f64 { if s == "inf" { f64::INFINITY } else { s.parse().unwrap() } };
    for (rec, row) in records.iter().zip(&report.rows) {
        assert_eq!(&rec[0], row.image);
        assert_eq!(rec[1].parse::<f64>().unwrap(), row.sigma);
        assert_eq!(&rec[2], row.engine.to_string());
        assert_eq!(rec[3].parse::<u64>().unwrap(), row.seed);
        let noisy = parse(&rec[4]);
        if row.psnr_noisy.is_infinite() {
            assert!(noisy.is_infinite());
        } else {
            assert!((noisy - row.psnr_noisy).abs() <= 5e-5);
        }
        match row.psnr_denoised {
            Some(v) => assert!((parse(&rec[5]) - v).abs() <= 5e-5),
            None => assert!(rec[5].is_empty()),
        }
        assert_eq!(rec[6].parse::<u64>().unwrap(), row.distance_evals);
        assert_eq!(rec[7].parse::<u64>().unwrap(), row.wall_ms.unwrap());
    }
}

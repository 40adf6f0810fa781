//! Properties of the synthetic generator that other tests rely on.

use recognizability::evaluation::spearman;
use recognizability::labels::CenterMode;
use recognizability::pipeline::label_records;
use recognizability::synth::{generate, saturation_stats, SynthConfig};

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn quality_tracks_ccs_with_fifty_samples_per_class() {
    let cfg = SynthConfig {
        gallery_per_class: 25,
        probe_per_class: 25,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg).unwrap();
    let labels = label_records(&ds.records, CenterMode::GalleryOnly).unwrap();
    let q: Vec<f64> = labels
        .rows()
        .iter()
        .map(|r| ds.true_quality[&r.sample])
        .collect();
    let ccs: Vec<f64> = labels.rows().iter().map(|r| r.ccs).collect();
    let rho = spearman(&q, &ccs).unwrap();
    assert!(rho > 0.7, "Spearman(quality, ccs) = {rho}");
}

#[test]
fn degraded_samples_cross_the_margin_more_often() {
    let ds = generate(&SynthConfig::default()).unwrap();
    let labels = label_records(&ds.records, CenterMode::GalleryOnly).unwrap();
    let (mut clean, mut degraded) = ((0usize, 0usize), (0usize, 0usize));
    for r in labels.rows() {
        let bucket = if ds.true_quality[&r.sample] > 0.5 {
            &mut clean
        } else {
            &mut degraded
        };
        bucket.0 += usize::from(r.ccas <= 0.0);
        bucket.1 += 1;
    }
    let frac = |(k, n): (usize, usize)| k as f64 / n as f64;
    assert!(frac(degraded) > frac(clean), "{degraded:?} vs {clean:?}");
}

#[test]
fn saturation_preset_concentrates_near_one() {
    let ds = generate(&SynthConfig::saturation_preset()).unwrap();
    let labels = label_records(&ds.records, CenterMode::GalleryOnly).unwrap();
    let stats = saturation_stats(&labels).unwrap();
    assert!((0.95..=0.99).contains(&stats.mean), "{stats:?}");
    assert!(stats.variance < 1e-3, "{stats:?}");
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let cfg = SynthConfig {
        num_classes: 80,
        ..SynthConfig::default()
    };
    let one = in_pool(1, || generate(&cfg).unwrap());
    let many = in_pool(4, || generate(&cfg).unwrap());
    assert_eq!(one, many);
    let la = in_pool(1, || {
        label_records(&one.records, CenterMode::GalleryOnly).unwrap()
    });
    let lb = in_pool(3, || {
        label_records(&many.records, CenterMode::GalleryOnly).unwrap()
    });
    assert_eq!(la, lb);
}

#[test]
fn different_axis_seeds_give_different_encoders() {
    let a = generate(&SynthConfig::default()).unwrap();
    let b = generate(&SynthConfig {
        axis_seed: 1,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_ne!(a.records[0].vector, b.records[0].vector);
}

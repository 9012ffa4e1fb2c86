//! Distribution functions against frozen scipy 1.15.3 values
//! (`scipy.stats.studentized_range.cdf`, `scipy.stats.f.cdf` / `.sf`).

use segbench::stats::{f_cdf, f_sf, studentized_range_cdf};

const SRANGE: &[(f64, u32, f64, f64)] = &[
    (0.5, 2, 1.0, 0.21634689593878548),
    (1.5, 2, 1.0, 0.5187349260190772),
    (2.5, 2, 1.0, 0.6722643500381508),
    (3.5, 2, 1.0, 0.7555365147283356),
    (5.0, 2, 1.0, 0.8245203439081782),
    (8.0, 2, 1.0, 0.8886112459769362),
    (0.5, 2, 4.0, 0.2584789436917937),
    (1.5, 2, 4.0, 0.651358860559796),
    (2.5, 2, 4.0, 0.8481654567170894),
    (3.5, 2, 4.0, 0.9314128943758574),
    (5.0, 2, 4.0, 0.9758898894486091),
    (8.0, 2, 4.0, 0.9951873216699557),
    (0.5, 3, 0.8, 0.06156128465361947),
    (1.5, 3, 0.8, 0.3118599694838277),
    (2.5, 3, 0.8, 0.4863783256936841),
    (3.5, 3, 0.8, 0.5919759479050731),
    (5.0, 3, 0.8, 0.6863158441342393),
    (8.0, 3, 0.8, 0.7816474908369958),
    (0.5, 3, 12.0, 0.06620898004620182),
    (1.5, 3, 12.0, 0.4450336040472148),
    (2.5, 3, 12.0, 0.7784001090700106),
    (3.5, 3, 12.0, 0.9300045147248164),
    (5.0, 3, 12.0, 0.9894004184264451),
    (8.0, 3, 12.0, 0.9997108897967796),
    (0.5, 4, 2.0, 0.018853374248656858),
    (1.5, 4, 2.0, 0.25791264605877473),
    (2.5, 4, 2.0, 0.5278050606331054),
    (3.5, 4, 2.0, 0.6973076943092047),
    (5.0, 4, 2.0, 0.8287810748540922),
    (8.0, 4, 2.0, 0.9265603375408054),
    (0.5, 5, 30.0, 0.00353618286341771),
    (1.5, 5, 30.0, 0.1751871173401451),
    (2.5, 5, 30.0, 0.5897882367474734),
    (3.5, 5, 30.0, 0.876451648158222),
    (5.0, 5, 30.0, 0.9891099811863214),
    (8.0, 5, 30.0, 0.9999659146762383),
    (0.5, 7, 406.0, 0.00015594285284183888),
    (1.5, 7, 406.0, 0.06094475726865234),
    (2.5, 7, 406.0, 0.42932158971966217),
    (3.5, 7, 406.0, 0.8287487804245922),
    (5.0, 7, 406.0, 0.9918084652011236),
    (8.0, 7, 406.0, 0.9999993919863751),
    (0.5, 10, 60.0, 1.7879214390535249e-06),
    (1.5, 10, 60.0, 0.013336936289429996),
    (2.5, 10, 60.0, 0.24798359516824106),
    (3.5, 10, 60.0, 0.6972158208681181),
    (5.0, 10, 60.0, 0.9747157802409215),
    (8.0, 10, 60.0, 0.9999806500133275),
    (0.5, 14, 5.0, 1.3658783707956897e-07),
    (1.5, 14, 5.0, 0.009357714165238392),
    (2.5, 14, 5.0, 0.17014411834738885),
    (3.5, 14, 5.0, 0.468504008136781),
    (5.0, 14, 5.0, 0.7793847626344094),
    (8.0, 14, 5.0, 0.9594422728279147),
    (0.5, 20, 1000.0, 1.8022896160793502e-13),
    (1.5, 20, 1000.0, 4.111669202545344e-05),
    (2.5, 20, 1000.0, 0.03144989835184629),
    (3.5, 20, 1000.0, 0.3962155430048689),
    (5.0, 20, 1000.0, 0.9470347595481164),
    (8.0, 20, 1000.0, 0.999996239838022),
];

const F: &[(f64, f64, f64, f64, f64)] = &[
    (0.3, 1.0, 1.0, 0.3190057200399772, 0.6809942799600229),
    (3.1, 2.0, 5.0, 0.8668381089004582, 0.13316189109954182),
    (2.1, 6.0, 406.0, 0.9477183467699896, 0.05228165323000988),
    (0.7, 13.0, 406.0, 0.23624262610242655, 0.7637573738975736),
    (6.0, 1.0, 406.0, 0.9852724865203063, 0.014727513479693682),
    (1.2, 0.5, 3.5, 0.7259934205479253, 0.274006579452075),
];

#[test]
fn studentized_range_grid_within_budget() {
    let mut worst = 0.0f64;
    for &(q, k, nu, want) in SRANGE {
        let got = studentized_range_cdf(q, k, nu).unwrap();
        let err = (got - want).abs();
        assert!(err < 1e-7, "q={q} k={k} nu={nu}: {got} vs {want}");
        worst = worst.max(err);
    }
    println!("worst studentized range error {worst:e}");
}

#[test]
fn f_grid() {
    for &(x, d1, d2, cdf, sf) in F {
        assert!((f_cdf(x, d1, d2).unwrap() - cdf).abs() < 1e-12, "cdf {x} {d1} {d2}");
        assert!((f_sf(x, d1, d2).unwrap() - sf).abs() < 1e-12, "sf {x} {d1} {d2}");
    }
}

#[test]
fn two_group_tukey_equals_pooled_t_test() {
    use segbench::stats::tukey_hsd;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    let a = vec![0.93, 0.95, 0.91, 0.97, 0.94, 0.92];
    let b = vec![0.90, 0.91, 0.93, 0.89, 0.92, 0.90];
    let n = a.len() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64]| {
        let m = mean(v);
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    let df = 2.0 * n - 2.0;
    let mse = (ss(&a) + ss(&b)) / df;
    let t = (mean(&a) - mean(&b)).abs() / (mse * 2.0 / n).sqrt();
    let p_t = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().sf(t);

    let pairs = tukey_hsd(&[("a".into(), a), ("b".into(), b)], mse, df).unwrap();
    assert!((pairs[0].p - p_t).abs() < 1e-7, "{} vs {p_t}", pairs[0].p);
    assert!((pairs[0].q - t * 2f64.sqrt()).abs() < 1e-12);
}

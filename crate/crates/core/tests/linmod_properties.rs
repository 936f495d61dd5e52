use approx::assert_relative_eq;
use loadopt::linmod::{self, Coding, DataTable, Matrix, ModelSpec, Term};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

#[test]
fn f_tail_agrees_with_statrs() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    for _ in 0..500 {
        let df1 = rng.random_range(1..=120) as f64;
        let df2 = rng.random_range(1..=400) as f64;
        let f = rng.random_range(0.0..6.0f64);
        let ours = linmod::f_pvalue(f, df1, df2).unwrap();
        let theirs = FisherSnedecor::new(df1, df2).unwrap().sf(f);
        assert!(
            (ours - theirs).abs() <= 1e-9,
            "F({df1},{df2}) at {f}: {ours} vs {theirs}"
        );
    }
}

#[test]
fn one_numerator_df_is_the_two_sided_t_tail() {
    let mut rng = ChaCha20Rng::seed_from_u64(32);
    for _ in 0..500 {
        let d = rng.random_range(1..=500) as f64;
        let t = rng.random_range(0.0..8.0f64);
        let two_sided = 2.0 * StudentsT::new(0.0, 1.0, d).unwrap().sf(t);
        let p = linmod::f_pvalue(t * t, 1.0, d).unwrap();
        assert!(
            (p - two_sided).abs() <= 1e-10,
            "t = {t}, df = {d}: {p} vs {two_sided}"
        );
    }
}

#[test]
fn random_full_rank_fit_matches_normal_equations() {
    let mut rng = ChaCha20Rng::seed_from_u64(33);
    for _ in 0..50 {
        let (n, p) = (20, 4);
        let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0));
        let y = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let beta = (x.transpose() * &x)
            .cholesky()
            .unwrap()
            .solve(&(x.transpose() * &y));
        let rss = (&y - &x * &beta).norm_squared();

        let columns: Vec<Vec<f64>> = (0..p)
            .map(|j| x.column(j).iter().copied().collect())
            .collect();
        let fit =
            linmod::fit_least_squares(&Matrix::from_columns(n, &columns), y.as_slice()).unwrap();
        assert_eq!(fit.rank, p);
        assert_eq!(fit.residual_df, n - p);
        for (a, b) in fit.coefficients.iter().zip(beta.iter()) {
            assert_relative_eq!(*a, *b, max_relative = 1e-8, epsilon = 1e-12);
        }
        assert_relative_eq!(fit.rss, rss, max_relative = 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn f_tail_decreases_in_the_statistic(
        df1 in 1..100u32,
        df2 in 1..400u32,
        f in 0.01..10.0f64,
        step in 0.01..2.0f64,
    ) {
        let (d1, d2) = (f64::from(df1), f64::from(df2));
        let a = linmod::f_pvalue(f, d1, d2).unwrap();
        let b = linmod::f_pvalue(f + step, d1, d2).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b < a, "p({}) = {b} not below p({f}) = {a}", f + step);
    }

    #[test]
    fn term_order_and_coding_leave_model_totals_alone(seed in any::<u64>()) {
        let (spec, data) = random_layout(seed);
        let base = linmod::type1_anova(&spec, &data).unwrap();
        let scale = base.total.ss;
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);

        let mut shuffled = spec.clone();
        let k = shuffled.terms.len();
        for i in (1..k).rev() {
            shuffled.terms.swap(i, rng.random_range(0..=i));
        }
        // An interaction must follow its main effects to keep its columns
        // meaningful; move it back to the end.
        shuffled.terms.sort_by_key(|t| t.sources.len() > 1);
        let permuted = linmod::type1_anova(&shuffled, &data).unwrap();
        for (a, b) in [
            (permuted.model.ss, base.model.ss),
            (permuted.error.ss, base.error.ss),
            (permuted.total.ss, base.total.ss),
        ] {
            prop_assert!((a - b).abs() <= 1e-8 * scale);
        }
        prop_assert_eq!(permuted.model.df, base.model.df);

        let sum = linmod::type1_anova_with_coding(&spec, &data, Coding::Sum).unwrap();
        for (r, s) in base.terms.iter().zip(&sum.terms) {
            prop_assert_eq!(r.df, s.df);
            prop_assert!((r.ss - s.ss).abs() <= 1e-8 * scale.max(r.ss), "{}: {} vs {}", r.source, r.ss, s.ss);
        }
    }

    #[test]
    fn tables_satisfy_the_bookkeeping_identities(seed in any::<u64>()) {
        let (spec, data) = random_layout(seed);
        let t = linmod::type1_anova(&spec, &data).unwrap();
        let ss: f64 = t.terms.iter().map(|r| r.ss).sum();
        let df: usize = t.terms.iter().map(|r| r.df).sum();
        prop_assert_eq!(df, t.model.df);
        prop_assert_eq!(t.model.df + t.error.df, t.total.df);
        prop_assert_eq!(t.total.df, t.n_obs - 1);
        prop_assert!((ss - t.model.ss).abs() <= 1e-8 * t.total.ss);
        prop_assert!((t.model.ss + t.error.ss - t.total.ss).abs() <= 1e-8 * t.total.ss);
        for r in &t.terms {
            if r.df > 0 {
                let ms = r.ms.unwrap();
                prop_assert!((ms - r.ss / r.df as f64).abs() <= 1e-12 * ms.abs().max(1.0));
                if let (Some(f), Some(mse)) = (r.f, t.error.ms) {
                    prop_assert!((f - ms / mse).abs() <= 1e-12 * f.max(1.0));
                }
            }
            if let Some(p) = r.p {
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}

/// Block, two factors and their interaction, with one covariate, on 15 to 60
/// unbalanced rows.
fn random_layout(seed: u64) -> (ModelSpec, DataTable) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = rng.random_range(15..=60);
    let mut pick = |k: usize, prefix: &str| -> Vec<String> {
        // The first k rows cover every level so none goes missing.
        (0..n)
            .map(|i| format!("{prefix}{}", if i < k { i } else { rng.random_range(0..k) }))
            .collect()
    };
    let block = pick(3, "b");
    let a = pick(3, "a");
    let b = pick(2, "c");
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 3.0 * z[i] + rng.random_range(-1.0..1.0))
        .collect();
    let data = DataTable::new(n)
        .with_numeric("y", &y)
        .unwrap()
        .with_numeric("z", &z)
        .unwrap()
        .with_text("block", &block)
        .unwrap()
        .with_text("a", &a)
        .unwrap()
        .with_text("b", &b)
        .unwrap();
    let spec = ModelSpec::new(
        "y",
        vec![
            Term::block("block", "block"),
            Term::factor("A", "a"),
            Term::factor("B", "b"),
            Term::covariate("z", "z"),
            Term::interaction("A * B", &["a", "b"]),
        ],
    );
    (spec, data)
}

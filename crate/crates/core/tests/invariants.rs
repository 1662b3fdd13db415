use std::io::Write;

use kernelflow::data::load_csv;
use kernelflow::linalg::{Matrix, Vector};
use kernelflow::select::{best_cell, CvCell, RegKind};
use kernelflow::{eig_sym, kernel_matrix, KernelFamily, KernelSpec};
use proptest::prelude::*;

#[test]
fn csv_file_round_trip() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "a,target,b").unwrap();
    writeln!(file, "1.5,2,-1").unwrap();
    writeln!(file, "0.25,-3.5,4").unwrap();
    file.flush().unwrap();
    let d = load_csv(file.path(), "target").unwrap();
    assert_eq!(d.n(), 2);
    assert_eq!(d.p(), 2);
    assert_eq!(d.y.as_slice(), &[2.0, -3.5]);
    assert_eq!(d.x[(0, 0)], 1.5);
    assert_eq!(d.x[(1, 1)], 4.0);
    assert_eq!(d.meta.columns, vec!["a".to_string(), "b".to_string()]);
}

#[test]
fn missing_target_column_is_an_error() {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    writeln!(file, "a,b\n1,2").unwrap();
    file.flush().unwrap();
    assert!(load_csv(file.path(), "y").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_matrices_are_psd(
        pts in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 3), 2..40),
        bw in 0.2f64..5.0,
        fam in 0usize..5,
    ) {
        let n = pts.len();
        let x = Matrix::from_fn(n, 3, |i, j| pts[i][j]);
        let spec = KernelSpec::new(KernelFamily::ALL[fam], bw).unwrap();
        let k = kernel_matrix(&spec, &x, 0.0).unwrap();
        let s = k.matrix().clone().symmetric_eigenvalues();
        prop_assert!(s.iter().all(|v| *v >= -1e-8), "min eigenvalue {}", s.min());
    }

    #[test]
    fn grid_order_does_not_change_selection(
        mses in prop::collection::vec(0usize..4, 12),
        shift in 0usize..12,
        reverse in any::<bool>(),
    ) {
        let bws = [0.5, 1.0, 2.0];
        let regs = [1e-3, 1e-2, 1e-1, 1.0];
        let table: Vec<CvCell> = (0..12)
            .map(|i| CvCell { bandwidth: bws[i / 4], reg: regs[i % 4], mean_mse: mses[i] as f64, sd_mse: 0.0 })
            .collect();
        for kind in [RegKind::Lambda, RegKind::Time] {
            let base = best_cell(kind, &table).unwrap();
            let mut perm = table.clone();
            perm.rotate_left(shift);
            if reverse {
                perm.reverse();
            }
            prop_assert_eq!(best_cell(kind, &perm).unwrap(), base);
        }
    }

    #[test]
    fn ridge_path_shrinks_with_lambda(
        pts in prop::collection::vec(-3.0f64..3.0, 3..20),
        lo in 1e-4f64..1.0,
        factor in 1.0f64..100.0,
    ) {
        let n = pts.len();
        let x = Matrix::from_fn(n, 1, |i, _| pts[i]);
        let y = Vector::from_fn(n, |i, _| pts[i].sin());
        let k = kernel_matrix(&KernelSpec::gaussian(1.0).unwrap(), &x, 1e-8).unwrap();
        let d = eig_sym(&k).unwrap();
        let a = kernelflow::closed_form::fit_krr_spectral(&d, &y, lo).unwrap().vector();
        let b = kernelflow::closed_form::fit_krr_spectral(&d, &y, lo * factor).unwrap().vector();
        prop_assert!(k.mul_vec(&b).norm() <= k.mul_vec(&a).norm() * (1.0 + 1e-12));
    }
}

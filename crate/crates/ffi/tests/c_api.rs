use std::ffi::{CStr, CString};
use std::ptr;

use ratkryl_ffi::*;

fn problem(name: &str, n: usize) -> *mut RkProblem {
    let name = CString::new(name).unwrap();
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { rk_problem_make(name.as_ptr(), n, &mut p) }, RkStatus::Ok);
    assert!(!p.is_null());
    p
}

fn last_error() -> String {
    let msg = rk_last_error_message();
    assert!(!msg.is_null());
    unsafe { CStr::from_ptr(msg) }.to_string_lossy().into_owned()
}

fn budget(n: usize) -> RkStopping {
    RkStopping {
        n_max: n,
        use_discrepancy: false,
        tau: 1.01,
        delta_abs: 0.0,
    }
}

#[test]
fn problem_round_trip() {
    let p = problem("phillips", 32);
    unsafe {
        assert_eq!((rk_problem_rows(p), rk_problem_cols(p)), (32, 32));
        let mut y = vec![0.0; 32];
        assert_eq!(rk_problem_copy_y(p, y.as_mut_ptr(), y.len()), RkStatus::Ok);
        assert!(y.iter().any(|&v| v != 0.0));
        let mut short = vec![0.0; 8];
        assert_eq!(rk_problem_copy_x_exact(p, short.as_mut_ptr(), short.len()), RkStatus::BufferTooSmall);
        assert!(last_error().contains("need 32"));
        rk_problem_free(p);
    }
}

#[test]
fn unknown_problem_and_null_arguments() {
    let name = CString::new("baart").unwrap();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(rk_problem_make(name.as_ptr(), 16, &mut p), RkStatus::UnknownProblem);
        assert!(p.is_null());
        assert!(last_error().contains("baart"));
        assert_eq!(rk_problem_make(ptr::null(), 16, &mut p), RkStatus::NullPointer);
        assert_eq!(rk_problem_rows(ptr::null()), 0);
        rk_problem_free(ptr::null_mut());
        rk_trace_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_the_error() {
    let p = problem("shaw", 16);
    unsafe {
        assert_eq!(rk_problem_copy_y(p, ptr::null_mut(), 16), RkStatus::NullPointer);
        assert!(!rk_last_error_message().is_null());
        let mut y = [0.0; 16];
        assert_eq!(rk_problem_copy_y(p, y.as_mut_ptr(), 16), RkStatus::Ok);
        assert!(rk_last_error_message().is_null());
        rk_problem_free(p);
    }
}

#[test]
fn solvers_on_exact_data() {
    let p = problem("gravity", 32);
    let stop = budget(6);
    unsafe {
        let mut residuals = Vec::new();
        for method in [RkMethod::Cgne, RkMethod::LanczosKr, RkMethod::RationalCg] {
            let mut t = ptr::null_mut();
            assert_eq!(rk_solve(p, method, ptr::null(), 0, ptr::null(), &stop, &mut t), RkStatus::Ok);
            assert_eq!(rk_trace_len(t), 6);
            let mut reason = RkStopReason::Discrepancy;
            assert_eq!(rk_trace_stop_reason(t, &mut reason), RkStatus::Ok);
            assert_eq!(reason, RkStopReason::Budget);
            assert_eq!(rk_trace_selected_n(t), 6);
            let mut r = vec![0.0; 6];
            assert_eq!(rk_trace_copy_residuals(t, r.as_mut_ptr(), 6), RkStatus::Ok);
            assert!(r.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
            residuals.push(r[5]);
            rk_trace_free(t);
        }
        // both rational methods minimize over the same space, which contains CGNE's
        assert!((residuals[1] - residuals[2]).abs() <= 1e-8 * residuals[2]);
        assert!(residuals[2] <= residuals[0]);
        rk_problem_free(p);
    }
}

#[test]
fn noisy_data_with_discrepancy_stop() {
    let p = problem("phillips", 64);
    unsafe {
        let mut y = vec![0.0; 64];
        let mut delta_abs = 0.0;
        assert_eq!(rk_problem_add_noise(p, 0.01, 7, y.as_mut_ptr(), 64, &mut delta_abs), RkStatus::Ok);
        assert!(delta_abs > 0.0);
        let stop = RkStopping {
            n_max: 50,
            use_discrepancy: true,
            tau: 1.01,
            delta_abs,
        };
        let alphas = RkAlphas {
            kind: RkAlphaKind::Geometric,
            a: 0.1,
            q: 10.0,
            s: 0,
            values: ptr::null(),
            n_values: 0,
        };
        let mut t = ptr::null_mut();
        assert_eq!(rk_solve(p, RkMethod::RationalCg, y.as_ptr(), 64, &alphas, &stop, &mut t), RkStatus::Ok);
        let mut reason = RkStopReason::Budget;
        rk_trace_stop_reason(t, &mut reason);
        assert_eq!(reason, RkStopReason::Discrepancy);
        let mut x = vec![0.0; 64];
        assert_eq!(rk_trace_copy_x(t, x.as_mut_ptr(), 64), RkStatus::Ok);
        assert!(x.iter().all(|v| v.is_finite()));
        rk_trace_free(t);

        // wrong data length
        assert_eq!(rk_solve(p, RkMethod::RationalCg, y.as_ptr(), 10, &alphas, &stop, &mut t), RkStatus::InvalidArgument);
        rk_problem_free(p);
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    let p = problem("deriv2", 16);
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(rk_solve(p, RkMethod::Cgne, ptr::null(), 0, ptr::null(), &budget(0), &mut t), RkStatus::InvalidArgument);
        let values = [0.1, -1.0];
        let alphas = RkAlphas {
            kind: RkAlphaKind::Explicit,
            a: 0.0,
            q: 0.0,
            s: 0,
            values: values.as_ptr(),
            n_values: 2,
        };
        assert_eq!(rk_solve(p, RkMethod::RationalCg, ptr::null(), 0, &alphas, &budget(4), &mut t), RkStatus::InvalidArgument);
        let mut x = [0.0; 16];
        assert_eq!(rk_tikhonov(p, ptr::null(), 0, -1.0, x.as_mut_ptr(), 16), RkStatus::SolverFailed);
        rk_problem_free(p);
    }
}

#[test]
fn dense_identity_recovers_data() {
    let a = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let x_exact = [1.0, -2.0, 0.5];
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(rk_problem_from_dense(3, 3, a.as_ptr(), x_exact.as_ptr(), &mut p), RkStatus::Ok);
        let mut t = ptr::null_mut();
        assert_eq!(rk_solve(p, RkMethod::RationalCg, ptr::null(), 0, ptr::null(), &budget(5), &mut t), RkStatus::Ok);
        let mut x = [0.0; 3];
        rk_trace_copy_x(t, x.as_mut_ptr(), 3);
        assert!(x.iter().zip(&x_exact).all(|(a, b)| (a - b).abs() <= 1e-12));
        rk_trace_free(t);

        let mut xt = [0.0; 3];
        assert_eq!(rk_tikhonov(p, ptr::null(), 0, 1.0, xt.as_mut_ptr(), 3), RkStatus::Ok);
        assert!(xt.iter().zip(&x_exact).all(|(a, b)| (a - b / 2.0).abs() <= 1e-15));

        let mut s = ptr::null_mut();
        assert_eq!(rk_problem_smooth(p, &mut s), RkStatus::Ok);
        let mut xs = [0.0; 3];
        rk_problem_copy_x_exact(s, xs.as_mut_ptr(), 3);
        assert_eq!(xs, x_exact);
        rk_problem_free(s);
        rk_problem_free(p);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ratkryl.h")).unwrap();
    for f in [
        "rk_last_error_message",
        "rk_problem_make",
        "rk_problem_from_dense",
        "rk_problem_smooth",
        "rk_problem_add_noise",
        "rk_problem_free",
        "rk_solve",
        "rk_tikhonov",
        "rk_trace_stop_reason",
        "rk_trace_copy_x",
        "rk_trace_free",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing");
    }
    assert!(header.contains("typedef struct RkProblem RkProblem;"));
}

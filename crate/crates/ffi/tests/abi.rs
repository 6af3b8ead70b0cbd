use std::ffi::{CStr, CString};
use std::ptr;

use specklevar_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(sv_last_error()) }.to_string_lossy().into_owned()
}

fn temporal(kind: SvKind) -> SvEstimator {
    SvEstimator {
        kind,
        channel: 0,
        spatial: 0,
        window: 0,
        frame: 0,
        unbiased: 0,
    }
}

fn map_values(m: *const SvMap) -> Vec<f64> {
    let (mut h, mut w) = (0, 0);
    unsafe {
        assert_eq!(sv_map_dims(m, &mut h, &mut w), SvStatus::Ok);
        let mut v = vec![0.0; h * w];
        assert_eq!(sv_map_values(m, v.as_mut_ptr(), v.len()), SvStatus::Ok);
        v
    }
}

#[test]
fn anchor_through_c_abi() {
    let mu = [1.0, 1.0];
    let cov = [1.0, 0.0, 0.0, 1.0];
    let mut g = 0.0;
    for (kind, want) in [
        (SvKind::R, std::f64::consts::FRAC_1_SQRT_2),
        (SvKind::Vv, 1.0),
        (SvKind::Vn, std::f64::consts::FRAC_1_SQRT_2),
        (SvKind::Az, std::f64::consts::FRAC_1_SQRT_2),
        (SvKind::Single, 1.0),
    ] {
        let st = unsafe { sv_mcv(mu.as_ptr(), cov.as_ptr(), 2, kind, 0, &mut g) };
        assert_eq!(st, SvStatus::Ok);
        assert!((g - want).abs() < 1e-12, "{kind:?}");
    }
}

#[test]
fn mcv_error_codes() {
    let mut g = 0.0;
    let zero = [0.0, 0.0];
    let cov = [1.0, 0.0, 0.0, 1.0];
    unsafe {
        assert_eq!(sv_mcv(zero.as_ptr(), cov.as_ptr(), 2, SvKind::Vv, 0, &mut g), SvStatus::Undefined);
        assert!(!last_error().is_empty());
        let bad = [1.0, 2.0, 0.0, 1.0];
        assert_eq!(sv_mcv(cov.as_ptr(), bad.as_ptr(), 2, SvKind::Vv, 0, &mut g), SvStatus::InvalidArgument);
        assert_eq!(sv_mcv(ptr::null(), cov.as_ptr(), 2, SvKind::Vv, 0, &mut g), SvStatus::NullPointer);
        assert_eq!(sv_mcv(cov.as_ptr(), cov.as_ptr(), 2, SvKind::Single, 5, &mut g), SvStatus::InvalidArgument);
        let one = [1.0, 1.0];
        assert_eq!(sv_mcv(one.as_ptr(), cov.as_ptr(), 2, SvKind::Vv, 0, &mut g), SvStatus::Ok);
        assert_eq!(last_error(), "");
    }
}

#[test]
fn simulate_and_map_pipeline() {
    let scenario = CString::new(
        r#"{"shape":[30,2,6,5],"seed":4,"ps_mask":{"pixels":[[2,3]]}}"#,
    )
    .unwrap();
    unsafe {
        let mut field = ptr::null_mut();
        assert_eq!(sv_simulate_json(scenario.as_ptr(), &mut field), SvStatus::Ok);
        let mut dims = [0usize; 4];
        let mut cplx = 0;
        assert_eq!(sv_stack_shape(field, dims.as_mut_ptr(), &mut cplx), SvStatus::Ok);
        assert_eq!((dims, cplx), ([30, 2, 6, 5], 1));

        let mut amp = ptr::null_mut();
        assert_eq!(sv_amplitudes(field, &mut amp), SvStatus::Ok);
        let mut gamma = ptr::null_mut();
        assert_eq!(sv_compute_map(amp, temporal(SvKind::R), &mut gamma), SvStatus::Ok);
        let g = map_values(gamma);
        assert_eq!(g.len(), 30);
        assert!(g[2 * 5 + 3] < 1e-6);
        assert!(g.iter().enumerate().all(|(i, v)| i == 13 || *v > 0.05));

        let mut vmai = ptr::null_mut();
        let mut sat = ptr::null_mut();
        assert_eq!(sv_vmai_map(amp, temporal(SvKind::R), &mut vmai, &mut sat), SvStatus::Ok);
        assert_eq!(map_values(sat)[13], 1.0);

        let mut auc = 0.0;
        assert_eq!(sv_roc_auc(gamma, sat, SvPolarity::Low, &mut auc), SvStatus::Ok);
        assert_eq!(auc, 1.0);

        let mut dop = ptr::null_mut();
        let mut inv = ptr::null_mut();
        assert_eq!(sv_temporal_dop(field, &mut dop), SvStatus::Ok);
        assert_eq!(sv_inverse_dop(dop, &mut inv), SvStatus::Ok);
        assert!((map_values(dop)[13] - 1.0).abs() < 1e-12);
        let mut r = 0.0;
        assert_eq!(sv_pearson(dop, dop, &mut r), SvStatus::Ok);
        assert!((r - 1.0).abs() < 1e-12);

        let mut stokes = ptr::null_mut();
        assert_eq!(sv_to_stokes(field, &mut stokes), SvStatus::Ok);
        let mut slow = ptr::null_mut();
        assert_eq!(sv_integrate_time(stokes, 3, &mut slow), SvStatus::Ok);
        assert_eq!(sv_stack_shape(slow, dims.as_mut_ptr(), ptr::null_mut()), SvStatus::Ok);
        assert_eq!(dims, [10, 4, 6, 5]);

        for m in [gamma, vmai, sat, dop, inv] {
            sv_map_free(m);
        }
        for s in [field, amp, stokes, slow] {
            sv_stack_free(s);
        }
    }
}

#[test]
fn precondition_reported_not_panicked() {
    let data = [1.0f32; 8];
    unsafe {
        let mut st = ptr::null_mut();
        assert_eq!(sv_stack_from_real(1, 2, 2, 2, data.as_ptr(), &mut st), SvStatus::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(sv_compute_map(st, temporal(SvKind::Vv), &mut m), SvStatus::Precondition);
        assert!(m.is_null());
        assert!(last_error().contains("2 frames"), "{}", last_error());
        let mut out = ptr::null_mut();
        assert_eq!(sv_amplitudes(st, &mut out), SvStatus::Precondition);
        assert_eq!(sv_compute_map(ptr::null(), temporal(SvKind::Vv), &mut m), SvStatus::NullPointer);
        sv_stack_free(st);
        sv_stack_free(ptr::null_mut());
        sv_map_free(ptr::null_mut());
    }
}

#[test]
fn file_round_trip_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("s.json").to_str().unwrap()).unwrap();
    let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
    unsafe {
        let mut st = ptr::null_mut();
        assert_eq!(sv_stack_from_complex(2, 2, 1, 3, data.as_ptr(), &mut st), SvStatus::Ok);
        assert_eq!(sv_stack_write(st, path.as_ptr()), SvStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(sv_stack_read(path.as_ptr(), &mut back), SvStatus::Ok);
        let mut got = vec![0.0f32; 24];
        assert_eq!(sv_stack_data(back, got.as_mut_ptr(), 24), SvStatus::Ok);
        assert_eq!(got, data);
        assert_eq!(sv_stack_data(back, got.as_mut_ptr(), 12), SvStatus::InvalidArgument);

        let missing = CString::new(dir.path().join("nope.json").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(sv_stack_read(missing.as_ptr(), &mut none), SvStatus::Io);
        let junk = dir.path().join("junk.json");
        std::fs::write(&junk, "{not json").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(sv_stack_read(junk.as_ptr(), &mut none), SvStatus::Format);
        assert!(none.is_null());

        let mut amp = ptr::null_mut();
        assert_eq!(sv_amplitudes(back, &mut amp), SvStatus::Ok);
        let mut m = ptr::null_mut();
        assert_eq!(sv_compute_map(amp, temporal(SvKind::Vv), &mut m), SvStatus::Ok);
        let mpath = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
        assert_eq!(sv_map_write(m, mpath.as_ptr()), SvStatus::Ok);
        let mut m2 = ptr::null_mut();
        assert_eq!(sv_map_read(mpath.as_ptr(), &mut m2), SvStatus::Ok);
        let stored: Vec<f64> = map_values(m).iter().map(|v| *v as f32 as f64).collect();
        assert_eq!(stored, map_values(m2));
        let mut valid = vec![9u8; 3];
        assert_eq!(sv_map_valid(m2, valid.as_mut_ptr(), 3), SvStatus::Ok);
        assert_eq!(valid, [1, 1, 1]);

        sv_map_free(m);
        sv_map_free(m2);
        for s in [st, back, amp] {
            sv_stack_free(s);
        }
    }
}

#[test]
fn version_and_header() {
    let v = unsafe { CStr::from_ptr(sv_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/specklevar.h")).unwrap();
    for name in ["sv_compute_map", "sv_mcv", "sv_last_error", "SV_STATUS_PANIC", "typedef struct SvStack SvStack"] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"specklevar.h\"\nint f(void) { SvEstimator e = { SV_KIND_VV, 0, 0, 0, 0, 0 }; return (int)e.kind + (int)SV_STATUS_OK; }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "header does not compile"),
        Err(_) => eprintln!("no C compiler found, skipping"),
    }
}

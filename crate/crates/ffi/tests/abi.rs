use std::ffi::{CStr, CString};
use std::ptr;

use seahaul_ffi::*;

fn last_error() -> String {
    let p = seahaul_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn run_to_completion_and_read_summary() {
    unsafe {
        let mut run: *mut SeahaulRun = ptr::null_mut();
        assert_eq!(seahaul_run_new(ptr::null(), 3, &mut run), SeahaulStatus::Ok);
        let mut tick = SeahaulTick::default();
        assert_eq!(seahaul_run_step(run, &mut tick), SeahaulStatus::Ok);
        assert_eq!(tick.phase, SeahaulPhase::TakeOff as u32);
        assert_eq!(seahaul_run_to_end(run), SeahaulStatus::Ok);
        let mut phase = SeahaulPhase::TakeOff;
        assert_eq!(seahaul_run_phase(run, &mut phase), SeahaulStatus::Ok);
        assert_eq!(phase, SeahaulPhase::Done);
        assert_eq!(seahaul_run_step(run, ptr::null_mut()), SeahaulStatus::Finished);
        assert!(last_error().contains("finished"));

        let mut json = ptr::null_mut();
        assert_eq!(seahaul_run_summary_json(run, &mut json), SeahaulStatus::Ok);
        let summary: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(summary["outcome"], "Done");
        assert_eq!(summary["seed"], 3);
        seahaul_string_free(json);
        seahaul_run_free(run);
    }
}

#[test]
fn handle_matches_the_library_run() {
    let cfg = seahaul::ScenarioConfig::competition_replica();
    let expected = seahaul::runner::run_quiet(&cfg, 8).unwrap();
    let text = CString::new(cfg.to_json()).unwrap();
    unsafe {
        let mut run = ptr::null_mut();
        assert_eq!(seahaul_run_new(text.as_ptr(), 8, &mut run), SeahaulStatus::Ok);
        assert_eq!(seahaul_run_to_end(run), SeahaulStatus::Ok);
        let mut json = ptr::null_mut();
        seahaul_run_summary_json(run, &mut json);
        assert_eq!(CStr::from_ptr(json).to_str().unwrap(), serde_json::to_string(&expected).unwrap());
        seahaul_string_free(json);
        seahaul_run_free(run);
    }
}

#[test]
fn bad_scenarios_report_config_errors() {
    let bad = CString::new(r#"{ "dt": -1 }"#).unwrap();
    let mut run = ptr::null_mut();
    unsafe {
        assert_eq!(seahaul_run_new(bad.as_ptr(), 0, &mut run), SeahaulStatus::Config);
        assert!(run.is_null());
        assert!(last_error().contains("dt"));
        assert_eq!(seahaul_run_new(ptr::null(), 0, ptr::null_mut()), SeahaulStatus::NullPointer);
        let not_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(seahaul_run_new(not_utf8.as_ptr().cast(), 0, &mut run), SeahaulStatus::InvalidUtf8);
        assert_eq!(seahaul_run_step(ptr::null_mut(), ptr::null_mut()), SeahaulStatus::NullPointer);
        seahaul_run_free(ptr::null_mut());
        seahaul_string_free(ptr::null_mut());
    }
}

#[test]
fn success_clears_the_last_error() {
    unsafe {
        seahaul_run_step(ptr::null_mut(), ptr::null_mut());
        assert!(!seahaul_last_error().is_null());
        let mut run = ptr::null_mut();
        seahaul_run_new(ptr::null(), 0, &mut run);
        assert!(seahaul_last_error().is_null());
        seahaul_run_free(run);
    }
}

#[test]
fn plan_reports_required_capacity() {
    let fov = |deg: f64| deg.to_radians();
    unsafe {
        let mut count = 0usize;
        let status = seahaul_plan_search(0.0, 0.0, 0.2, 12.0, 9.0, 0.0, 1.0, fov(73.0), fov(106.0), ptr::null_mut(), 0, &mut count);
        assert_eq!(status, SeahaulStatus::BufferTooSmall);
        assert!(count > 1);
        let mut buf = vec![SeahaulWaypoint::default(); count];
        let status = seahaul_plan_search(0.0, 0.0, 0.2, 12.0, 9.0, 0.0, 1.0, fov(73.0), fov(106.0), buf.as_mut_ptr(), count, &mut count);
        assert_eq!(status, SeahaulStatus::Ok);
        let deck = seahaul::planner::DeckPose {
            center: [0.0, 0.0],
            yaw: 0.2,
            size: [12.0, 9.0],
            height: 0.0,
        };
        let lib = seahaul::planner::plan_search(&deck, 1.0, fov(73.0), fov(106.0)).unwrap();
        for (a, b) in buf.iter().zip(&lib.waypoints) {
            assert_eq!((a.x, a.y, a.z, a.yaw), (b.x, b.y, b.z, b.yaw));
        }
        let status = seahaul_plan_search(0.0, 0.0, 0.0, 4.0, 4.0, 0.0, -1.0, fov(73.0), fov(106.0), ptr::null_mut(), 0, &mut count);
        assert_eq!(status, SeahaulStatus::InvalidArgument);
    }
}

#[test]
fn multilateration_through_the_abi() {
    let anchors: [f64; 12] = [0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 4.0, 0.0, 4.0, 4.0, 0.5];
    let truth: [f64; 3] = [1.0, 1.5, 2.0];
    let ranges: Vec<f64> = anchors
        .chunks(3)
        .map(|a| ((a[0] - truth[0]).powi(2) + (a[1] - truth[1]).powi(2) + (a[2] - truth[2]).powi(2)).sqrt())
        .collect();
    let mut p = [0.0; 3];
    unsafe {
        assert_eq!(seahaul_multilaterate(anchors.as_ptr(), ranges.as_ptr(), 4, p.as_mut_ptr()), SeahaulStatus::Ok);
    }
    for i in 0..3 {
        assert!((p[i] - truth[i]).abs() < 1e-9, "{p:?}");
    }
    let line = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0];
    unsafe {
        assert_eq!(seahaul_multilaterate(line.as_ptr(), ranges.as_ptr(), 3, p.as_mut_ptr()), SeahaulStatus::Degenerate);
    }
}

#[test]
fn attachment_through_the_abi() {
    let pre: Vec<f64> = [100.0f64; 4].repeat(10);
    let post: Vec<f64> = [100.0 * (8.79f64 / 7.9).sqrt(); 4].repeat(10);
    let mut attached = 9u8;
    unsafe {
        assert_eq!(seahaul_attachment_check(pre.as_ptr(), 10, post.as_ptr(), 10, 0.05, &mut attached), SeahaulStatus::Ok);
        assert_eq!(attached, 1);
        seahaul_attachment_check(pre.as_ptr(), 10, post.as_ptr(), 10, 0.20, &mut attached);
        assert_eq!(attached, 0);
        seahaul_attachment_check(pre.as_ptr(), 10, pre.as_ptr(), 10, 0.05, &mut attached);
        assert_eq!(attached, 0);
        assert_eq!(
            seahaul_attachment_check(pre.as_ptr(), 0, post.as_ptr(), 10, 0.05, &mut attached),
            SeahaulStatus::InvalidArgument
        );
    }
}

#[test]
fn version_matches_the_crate() {
    let v = unsafe { CStr::from_ptr(seahaul_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

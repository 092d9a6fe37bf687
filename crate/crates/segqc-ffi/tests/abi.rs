//! Exercises the C ABI from Rust and from an actual C translation unit
//! compiled against the generated header.

use std::ffi::{CStr, CString};
use std::path::PathBuf;

use segqc::model::{save_checkpoint, QcResUNet, QcResUNetConfig};
use segqc_ffi::*;

fn checkerboard_labels(n: usize) -> Vec<u8> {
    let mut v = vec![0u8; n * n * n];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                v[(z * n + y) * n + x] = match (z + y + x) % 4 {
                    1 => 1,
                    2 => 2,
                    3 => 4,
                    _ => 0,
                };
            }
        }
    }
    v
}

#[test]
fn version_and_error_strings_are_valid() {
    unsafe {
        let v = CStr::from_ptr(segqc_version());
        assert!(!v.to_str().unwrap().is_empty());
        let e = CStr::from_ptr(segqc_last_error());
        assert_eq!(e.to_str().unwrap(), "");
    }
}

#[test]
fn metrics_via_ffi_match_library() {
    unsafe {
        let h = segqc_hierarchy_brats();
        assert_eq!(segqc_hierarchy_num_classes(h), 3);
        let n = 6usize;
        let q = checkerboard_labels(n);
        let mut g = q.clone();
        g[0] = 4; // one disagreement
        let mut dsc = f64::NAN;
        let status =
            segqc_multiclass_dsc(h, q.as_ptr(), g.as_ptr(), n, n, n, &mut dsc as *mut f64);
        assert_eq!(status, SegqcStatus::Ok);
        assert!((0.0..=1.0).contains(&dsc));

        let mut nsd = f64::NAN;
        let status =
            segqc_nsd(h, q.as_ptr(), g.as_ptr(), n, n, n, 1.0, &mut nsd as *mut f64);
        assert_eq!(status, SegqcStatus::Ok);
        assert!((0.0..=1.0).contains(&nsd));

        let mut sem = vec![0u8; 3 * n * n * n];
        let status =
            segqc_sem_ground_truth(h, q.as_ptr(), g.as_ptr(), n, n, n, sem.as_mut_ptr());
        assert_eq!(status, SegqcStatus::Ok);
        assert!(sem.iter().any(|&b| b == 1), "one flipped voxel must appear in the error map");

        // Undeclared label -> data error with a message.
        let mut bad = q.clone();
        bad[1] = 9;
        let status =
            segqc_multiclass_dsc(h, bad.as_ptr(), g.as_ptr(), n, n, n, &mut dsc as *mut f64);
        assert_eq!(status, SegqcStatus::DataError);
        let msg = CStr::from_ptr(segqc_last_error()).to_str().unwrap();
        assert!(msg.contains('9'), "error should name the offending label: {msg}");

        segqc_hierarchy_free(h);
    }
}

#[test]
fn model_predict_via_ffi() {
    let dir = tempfile::tempdir().unwrap();
    let model = QcResUNet::new(QcResUNetConfig::brain(1, 3, 2), 4).unwrap();
    save_checkpoint(&model, dir.path()).unwrap();

    unsafe {
        let path = CString::new(dir.path().to_str().unwrap()).unwrap();
        let m = segqc_model_load(path.as_ptr());
        assert!(!m.is_null());
        assert_eq!(segqc_model_num_classes(m), 3);
        assert_eq!(segqc_model_in_modalities(m), 1);

        let h = segqc_hierarchy_brats();
        let n = 16usize;
        let image: Vec<f32> = (0..n * n * n).map(|i| (i % 7) as f32 / 7.0).collect();
        let labels = checkerboard_labels(n);
        let mut dsc = f64::NAN;
        let mut nsd = f64::NAN;
        let mut sem = vec![0f32; 3 * n * n * n];
        let status = segqc_predict(
            m,
            h,
            image.as_ptr(),
            labels.as_ptr(),
            1,
            n,
            n,
            n,
            &mut dsc,
            &mut nsd,
            sem.as_mut_ptr(),
        );
        assert_eq!(status, SegqcStatus::Ok);
        assert!((0.0..=1.0).contains(&dsc));
        assert!((0.0..=1.0).contains(&nsd));
        assert!(sem.iter().all(|&p| (0.0..=1.0).contains(&p)));

        // Indivisible shape is a clean error, not a crash.
        let status = segqc_predict(
            m,
            h,
            image.as_ptr(),
            labels.as_ptr(),
            1,
            n - 1,
            n,
            n,
            &mut dsc,
            &mut nsd,
            std::ptr::null_mut(),
        );
        assert_ne!(status, SegqcStatus::Ok);

        segqc_model_free(m);
        segqc_hierarchy_free(h);
    }
}

/// Compiles and runs a real C program against include/segqc.h and the cdylib.
#[test]
fn c_translation_unit_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = crate_dir.join("include");
    let lib_dir = {
        // target/<profile>/deps/<test-bin> -> target/<profile>
        let mut exe = std::env::current_exe().unwrap();
        exe.pop();
        if exe.ends_with("deps") {
            exe.pop();
        }
        exe
    };
    let lib = lib_dir.join("libsegqc_ffi.so");
    if !lib.exists() {
        panic!("cdylib not found at {}", lib.display());
    }

    let work = tempfile::tempdir().unwrap();
    let c_src = work.path().join("smoke.c");
    std::fs::write(
        &c_src,
        r#"
#include <stdio.h>
#include <string.h>
#include "segqc.h"

int main(void) {
    if (strlen(segqc_version()) == 0) return 1;
    SegqcHierarchy *h = segqc_hierarchy_brats();
    if (!h || segqc_hierarchy_num_classes(h) != 3) return 2;
    unsigned char q[8] = {0, 1, 2, 4, 0, 1, 2, 4};
    unsigned char g[8] = {0, 1, 2, 4, 0, 1, 2, 4};
    double dsc = -1.0;
    SegqcStatus s = segqc_multiclass_dsc(h, q, g, 2, 2, 2, &dsc);
    if (s != SEGQC_STATUS_OK || dsc != 1.0) return 3;
    g[1] = 9; /* undeclared label */
    s = segqc_multiclass_dsc(h, q, g, 2, 2, 2, &dsc);
    if (s != SEGQC_STATUS_DATA_ERROR) return 4;
    if (strlen(segqc_last_error()) == 0) return 5;
    segqc_hierarchy_free(h);
    printf("ok\n");
    return 0;
}
"#,
    )
    .unwrap();
    let bin = work.path().join("smoke");
    let cc = std::process::Command::new("cc")
        .arg(&c_src)
        .arg("-I")
        .arg(&header_dir)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lsegqc_ffi")
        .arg("-o")
        .arg(&bin)
        .output()
        .expect("invoke cc");
    assert!(cc.status.success(), "cc failed: {}", String::from_utf8_lossy(&cc.stderr));
    let run = std::process::Command::new(&bin)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .expect("run smoke");
    assert!(
        run.status.success(),
        "smoke exited {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}

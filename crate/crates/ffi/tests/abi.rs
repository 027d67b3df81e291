use std::ffi::{c_char, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use casii_ffi::*;

fn cpath(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { casii_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn small_config() -> CasiiSynthConfig {
    CasiiSynthConfig {
        dim: 8,
        n_negative_bags: 6,
        n_positive_bags: 6,
        min_instances: 10,
        max_instances: 20,
        min_witness_rate: 0.2,
        max_witness_rate: 0.4,
        tumor_shift: 1.0,
        seed: 3,
        ..casii_synth_defaults()
    }
}

#[test]
fn full_pipeline_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut ds = ptr::null_mut();
        assert_eq!(casii_dataset_generate(&small_config(), &mut ds), CasiiStatus::Ok);
        assert_eq!(casii_dataset_len(ds), 12);

        let data_path = cpath(&dir.path().join("d.csid"));
        assert_eq!(casii_dataset_save(ds, data_path.as_ptr()), CasiiStatus::Ok);
        let mut ds2 = ptr::null_mut();
        assert_eq!(casii_dataset_load(data_path.as_ptr(), &mut ds2), CasiiStatus::Ok);
        assert_eq!(casii_dataset_len(ds2), 12);

        let mut keys = ptr::null_mut();
        assert_eq!(casii_keys_build(ds, 2, 0, &mut keys), CasiiStatus::Ok);
        assert!(casii_keys_tau(keys) >= 6);

        let cfg = CasiiTrainConfig {
            latent_dim: 8,
            max_epochs: 3,
            warmup_epochs: 1,
            runs: 1,
            val_ratio: 0.34,
            learning_rate: 1e-2,
            ..casii_train_defaults()
        };
        let mut model = ptr::null_mut();
        let mut auc = f64::NAN;
        assert_eq!(casii_model_train(ds, keys, &cfg, &mut model, &mut auc), CasiiStatus::Ok);
        assert!((0.0..=1.0).contains(&auc));

        let model_path = cpath(&dir.path().join("m.csim"));
        assert_eq!(casii_model_save(model, model_path.as_ptr()), CasiiStatus::Ok);
        let mut model2 = ptr::null_mut();
        assert_eq!(casii_model_load(model_path.as_ptr(), &mut model2), CasiiStatus::Ok);

        let (mut id, mut label, mut n) = (0u32, 0u8, 0usize);
        assert_eq!(casii_dataset_bag_info(ds2, 0, &mut id, &mut label, &mut n), CasiiStatus::Ok);

        let mut p1 = 0.0;
        let mut p2 = 0.0;
        assert_eq!(casii_predict(model, keys, ds, 0, &mut p1), CasiiStatus::Ok);
        assert_eq!(casii_predict(model2, keys, ds2, 0, &mut p2), CasiiStatus::Ok);
        assert_eq!(p1.to_bits(), p2.to_bits());

        let mut needed = 0;
        assert_eq!(
            casii_attention(model, keys, ds, 0, ptr::null_mut(), 0, &mut needed),
            CasiiStatus::BufferTooSmall
        );
        assert_eq!(needed, n);
        let mut att = vec![0.0; needed];
        assert_eq!(
            casii_attention(model, keys, ds, 0, att.as_mut_ptr(), att.len(), &mut needed),
            CasiiStatus::Ok
        );
        assert!((att.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        casii_model_free(model);
        casii_model_free(model2);
        casii_keys_free(keys);
        casii_dataset_free(ds);
        casii_dataset_free(ds2);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut ds = ptr::null_mut();
        let bad = CasiiSynthConfig { min_witness_rate: 0.5, max_witness_rate: 0.1, ..small_config() };
        assert_eq!(casii_dataset_generate(&bad, &mut ds), CasiiStatus::InvalidArgument);
        assert!(ds.is_null());
        assert!(!last_error().is_empty());

        assert_eq!(casii_dataset_generate(ptr::null(), &mut ds), CasiiStatus::NullPointer);

        let missing = CString::new("/nonexistent/dir/x.csid").unwrap();
        assert_eq!(casii_dataset_load(missing.as_ptr(), &mut ds), CasiiStatus::Data);

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.csim");
        std::fs::write(&junk, b"nope").unwrap();
        let mut model = ptr::null_mut();
        assert_eq!(casii_model_load(cpath(&junk).as_ptr(), &mut model), CasiiStatus::Data);

        assert_eq!(casii_dataset_generate(&small_config(), &mut ds), CasiiStatus::Ok);
        assert_eq!(last_error(), "");
        let mut keys = ptr::null_mut();
        assert_eq!(casii_keys_build(ds, 0, 0, &mut keys), CasiiStatus::InvalidArgument);
        let (mut id, mut label, mut n) = (0u32, 0u8, 0usize);
        assert_eq!(casii_dataset_bag_info(ds, 99, &mut id, &mut label, &mut n), CasiiStatus::InvalidArgument);
        assert!(last_error().contains("out of range"));
        casii_dataset_free(ds);

        casii_dataset_free(ptr::null_mut());
        assert_eq!(casii_dataset_len(ptr::null()), 0);
    }
}

#[test]
fn last_error_truncates() {
    unsafe {
        let mut ds = ptr::null_mut();
        casii_dataset_generate(ptr::null(), &mut ds);
        let mut buf = [1 as c_char; 4];
        let full = casii_last_error(buf.as_mut_ptr(), buf.len());
        assert!(full > 3);
        assert_eq!(buf[3], 0);
        assert_eq!(casii_last_error(ptr::null_mut(), 0), full);
    }
}

#[test]
fn gradcheck_entry_point() {
    let mut err = f64::NAN;
    assert_eq!(unsafe { casii_gradcheck(0, 2, &mut err) }, CasiiStatus::Ok);
    assert!(err < 1e-5);
}

#[test]
fn header_is_valid_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/casii.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["casii_dataset_generate", "casii_attention", "CASII_STATUS_BUFFER_TOO_SMALL", "typedef struct CasiiModel CasiiModel"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).output() else {
        eprintln!("no C compiler found; syntax check skipped");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

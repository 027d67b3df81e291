//! C ABI for the casii engine.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`CasiiStatus`]; on failure a message is available from
//! [`casii_last_error`] on the same thread. Panics are caught and reported as
//! `CASII_STATUS_PANIC`.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access the function
//! documents: handles must come from this library and not be freed yet,
//! paths must be NUL-terminated UTF-8, and output buffers must hold at least
//! the stated number of elements. Null pointers are reported, not
//! dereferenced.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use casii::model::{forward, predict};
use casii::nrl::build_key_matrix;
use casii::synthdata::{generate, load_dataset, save_dataset};
use casii::train::gradcheck::{self, GradDims};
use casii::train::multi_run_select;
use casii::{CasiiParams, Dataset, Error, ErrorKind, KeyMatrix, SynthConfig, TrainConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CasiiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Data = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Bag dataset handle.
pub struct CasiiDataset(Dataset);
/// Negative key matrix handle.
pub struct CasiiKeys(KeyMatrix);
/// Model parameter handle.
pub struct CasiiModel(CasiiParams);

/// Generator settings; fields mirror the defaults from [`casii_synth_defaults`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CasiiSynthConfig {
    pub dim: usize,
    pub n_negative_bags: usize,
    pub n_positive_bags: usize,
    pub min_instances: usize,
    pub max_instances: usize,
    pub min_witness_rate: f64,
    pub max_witness_rate: f64,
    pub n_normal_clusters: usize,
    pub cluster_spread: f64,
    pub tumor_shift: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl From<SynthConfig> for CasiiSynthConfig {
    fn from(c: SynthConfig) -> Self {
        CasiiSynthConfig {
            dim: c.dim,
            n_negative_bags: c.n_negative_bags,
            n_positive_bags: c.n_positive_bags,
            min_instances: c.instances_per_bag.0,
            max_instances: c.instances_per_bag.1,
            min_witness_rate: c.witness_rate.0,
            max_witness_rate: c.witness_rate.1,
            n_normal_clusters: c.n_normal_clusters,
            cluster_spread: c.cluster_spread,
            tumor_shift: c.tumor_shift,
            noise_sigma: c.noise_sigma,
            seed: c.seed,
        }
    }
}

impl From<CasiiSynthConfig> for SynthConfig {
    fn from(c: CasiiSynthConfig) -> Self {
        SynthConfig {
            dim: c.dim,
            n_negative_bags: c.n_negative_bags,
            n_positive_bags: c.n_positive_bags,
            instances_per_bag: (c.min_instances, c.max_instances),
            witness_rate: (c.min_witness_rate, c.max_witness_rate),
            n_normal_clusters: c.n_normal_clusters,
            cluster_spread: c.cluster_spread,
            tumor_shift: c.tumor_shift,
            noise_sigma: c.noise_sigma,
            seed: c.seed,
        }
    }
}

/// Subset of the training settings exposed over the ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CasiiTrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub r: usize,
    pub warmup_epochs: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub val_ratio: f64,
    pub runs: usize,
    pub seed: u64,
    pub latent_dim: usize,
    pub use_bot: bool,
    pub use_top: bool,
    pub parallel: bool,
}

impl From<TrainConfig> for CasiiTrainConfig {
    fn from(c: TrainConfig) -> Self {
        CasiiTrainConfig {
            learning_rate: c.learning_rate,
            weight_decay: c.weight_decay,
            lambda1: c.lambda1,
            lambda2: c.lambda2,
            r: c.r,
            warmup_epochs: c.warmup_epochs,
            patience: c.patience,
            max_epochs: c.max_epochs,
            val_ratio: c.val_ratio,
            runs: c.runs,
            seed: c.seed,
            latent_dim: c.latent_dim,
            use_bot: c.toggles.use_bot,
            use_top: c.toggles.use_top,
            parallel: c.parallel,
        }
    }
}

impl CasiiTrainConfig {
    fn to_core(self) -> TrainConfig {
        let mut c = TrainConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            r: self.r,
            warmup_epochs: self.warmup_epochs,
            patience: self.patience,
            max_epochs: self.max_epochs,
            val_ratio: self.val_ratio,
            runs: self.runs,
            seed: self.seed,
            latent_dim: self.latent_dim,
            parallel: self.parallel,
            ..TrainConfig::default()
        };
        c.toggles.use_bot = self.use_bot;
        c.toggles.use_top = self.use_top;
        c
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(err: &Error) -> CasiiStatus {
    match err.kind() {
        ErrorKind::Usage => CasiiStatus::InvalidArgument,
        ErrorKind::Data => CasiiStatus::Data,
        ErrorKind::Numerical => CasiiStatus::Numerical,
    }
}

struct Fail(CasiiStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(CasiiStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CasiiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            CasiiStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CasiiStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(CasiiStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length
/// without the terminator.
#[no_mangle]
pub unsafe extern "C" fn casii_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

#[no_mangle]
pub extern "C" fn casii_synth_defaults() -> CasiiSynthConfig {
    SynthConfig::default().into()
}

#[no_mangle]
pub extern "C" fn casii_train_defaults() -> CasiiTrainConfig {
    TrainConfig::default().into()
}

#[no_mangle]
pub unsafe extern "C" fn casii_dataset_generate(
    config: *const CasiiSynthConfig,
    out: *mut *mut CasiiDataset,
) -> CasiiStatus {
    guard(|| {
        let cfg: SynthConfig = (*deref(config, "config")?).into();
        put(out, CasiiDataset(generate(&cfg)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn casii_dataset_load(path: *const c_char, out: *mut *mut CasiiDataset) -> CasiiStatus {
    guard(|| put(out, CasiiDataset(load_dataset(&path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn casii_dataset_save(ds: *const CasiiDataset, path: *const c_char) -> CasiiStatus {
    guard(|| Ok(save_dataset(&deref(ds, "dataset")?.0, &path_arg(path)?)?))
}

/// Number of bags, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn casii_dataset_len(ds: *const CasiiDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.len())
}

/// Id, label and instance count of the bag at `index`.
#[no_mangle]
pub unsafe extern "C" fn casii_dataset_bag_info(
    ds: *const CasiiDataset,
    index: usize,
    id: *mut u32,
    label: *mut u8,
    n_instances: *mut usize,
) -> CasiiStatus {
    guard(|| {
        let bag = bag_at(ds, index)?;
        if id.is_null() || label.is_null() || n_instances.is_null() {
            return Err(null("output"));
        }
        *id = bag.id;
        *label = bag.label;
        *n_instances = bag.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn casii_dataset_free(ds: *mut CasiiDataset) {
    free(ds)
}

unsafe fn bag_at<'a>(ds: *const CasiiDataset, index: usize) -> Result<&'a casii::InstanceBag, Fail> {
    let ds = deref(ds, "dataset")?;
    ds.0.bags.get(index).ok_or_else(|| {
        Fail(
            CasiiStatus::InvalidArgument,
            format!("bag index {index} out of range for {} bags", ds.0.len()),
        )
    })
}

/// Builds keys from the dataset's negative bags. `max_instances_per_bag` of
/// 0 means no cap.
#[no_mangle]
pub unsafe extern "C" fn casii_keys_build(
    ds: *const CasiiDataset,
    t_max: usize,
    max_instances_per_bag: usize,
    out: *mut *mut CasiiKeys,
) -> CasiiStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let cap = (max_instances_per_bag > 0).then_some(max_instances_per_bag);
        put(out, CasiiKeys(build_key_matrix(&ds.0.negatives(), t_max, cap)?))
    })
}

#[no_mangle]
pub unsafe extern "C" fn casii_keys_load(path: *const c_char, out: *mut *mut CasiiKeys) -> CasiiStatus {
    guard(|| put(out, CasiiKeys(KeyMatrix::load(&path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn casii_keys_save(keys: *const CasiiKeys, path: *const c_char) -> CasiiStatus {
    guard(|| Ok(deref(keys, "keys")?.0.save(&path_arg(path)?)?))
}

/// Number of key columns, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn casii_keys_tau(keys: *const CasiiKeys) -> usize {
    keys.as_ref().map_or(0, |k| k.0.tau())
}

#[no_mangle]
pub unsafe extern "C" fn casii_keys_free(keys: *mut CasiiKeys) {
    free(keys)
}

/// Trains with best-of-N selection and returns the selected model.
/// `best_val_auc` may be null.
#[no_mangle]
pub unsafe extern "C" fn casii_model_train(
    ds: *const CasiiDataset,
    keys: *const CasiiKeys,
    config: *const CasiiTrainConfig,
    out: *mut *mut CasiiModel,
    best_val_auc: *mut f64,
) -> CasiiStatus {
    guard(|| {
        let ds = deref(ds, "dataset")?;
        let keys = deref(keys, "keys")?;
        let cfg = deref(config, "config")?.to_core();
        let outcome = multi_run_select(&ds.0.bags, &keys.0, &cfg)?;
        if !best_val_auc.is_null() {
            *best_val_auc = outcome.runs[outcome.selected].history.best_val_auc;
        }
        put(out, CasiiModel(outcome.params))
    })
}

#[no_mangle]
pub unsafe extern "C" fn casii_model_load(path: *const c_char, out: *mut *mut CasiiModel) -> CasiiStatus {
    guard(|| put(out, CasiiModel(CasiiParams::load(&path_arg(path)?)?)))
}

#[no_mangle]
pub unsafe extern "C" fn casii_model_save(model: *const CasiiModel, path: *const c_char) -> CasiiStatus {
    guard(|| Ok(deref(model, "model")?.0.save(&path_arg(path)?)?))
}

#[no_mangle]
pub unsafe extern "C" fn casii_model_free(model: *mut CasiiModel) {
    free(model)
}

/// Bag probability for the bag at `index`.
#[no_mangle]
pub unsafe extern "C" fn casii_predict(
    model: *const CasiiModel,
    keys: *const CasiiKeys,
    ds: *const CasiiDataset,
    index: usize,
    p_bag: *mut f64,
) -> CasiiStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let keys = deref(keys, "keys")?;
        let bag = bag_at(ds, index)?;
        if p_bag.is_null() {
            return Err(null("p_bag"));
        }
        *p_bag = predict(bag, &keys.0, &model.0)?;
        Ok(())
    })
}

/// Writes the attention weights of the bag at `index` into `buf`. `needed`
/// always receives the bag size; `CASII_STATUS_BUFFER_TOO_SMALL` is
/// returned when `cap` is smaller.
#[no_mangle]
pub unsafe extern "C" fn casii_attention(
    model: *const CasiiModel,
    keys: *const CasiiKeys,
    ds: *const CasiiDataset,
    index: usize,
    buf: *mut f64,
    cap: usize,
    needed: *mut usize,
) -> CasiiStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let keys = deref(keys, "keys")?;
        let bag = bag_at(ds, index)?;
        if needed.is_null() {
            return Err(null("needed"));
        }
        *needed = bag.len();
        if cap < bag.len() {
            return Err(Fail(
                CasiiStatus::BufferTooSmall,
                format!("attention needs {} slots, buffer has {cap}", bag.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        let trace = forward(bag, &keys.0, &model.0)?;
        ptr::copy_nonoverlapping(trace.attention.as_ptr(), buf, trace.attention.len());
        Ok(())
    })
}

/// Runs the gradient check on `cases` random problems of the default size
/// and stores the worst block error in `max_error`.
#[no_mangle]
pub unsafe extern "C" fn casii_gradcheck(seed: u64, cases: usize, max_error: *mut f64) -> CasiiStatus {
    guard(|| {
        if max_error.is_null() {
            return Err(null("max_error"));
        }
        let seeds: Vec<u64> = (0..cases as u64).map(|i| casii::synthdata::derive_seed(seed, i)).collect();
        let report = gradcheck::run_suite(GradDims::default(), &seeds, false)?;
        *max_error = report.max_error().1;
        Ok(())
    })
}

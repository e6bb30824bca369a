//! C ABI for the `aalen` crate: opaque handles over intensity models,
//! simulated records, and posterior chains, with JSON as the structured
//! data interchange format.
//!
//! ## Conventions
//!
//! * Every fallible function returns an [`AalenStatus`]; `AALEN_STATUS_OK`
//!   (zero) means success.  On failure the thread-local message retrieved
//!   by [`aalen_last_error`] describes the problem; it stays valid until
//!   the next failing call on the same thread.
//! * Handles (`AalenModel`, `AalenRecord`, `AalenChain`) are opaque and
//!   owned by the caller once returned through an out-pointer; release
//!   them with the matching `aalen_*_free` function.  Freeing `NULL` is a
//!   no-op.  Handles are not reference-counted: never free one twice and
//!   never use one after freeing it.
//! * Strings returned through `char **` out-pointers are NUL-terminated,
//!   UTF-8, owned by the caller, and must be released with
//!   [`aalen_string_free`].  Strings returned as plain `const char *`
//!   (version, last error) are borrowed and must not be freed.
//! * All functions are safe to call from multiple threads as long as each
//!   handle is used by one thread at a time.  Panics are caught at the
//!   boundary and reported as `AALEN_STATUS_PANIC` instead of unwinding
//!   across the ABI.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use aalen::intensity::IntensityModel;
use aalen::likelihood::log_likelihood;
use aalen::metrics::{hellinger, kappa0, kl_aalen, l1_distance};
use aalen::posterior::{
    fit_dpm, fit_loglinear, fit_logspline, posterior_summary, McmcSettings, PosteriorChain,
    PriorSpec,
};
use aalen::processes::{CountingRecord, ModelSpec};
use aalen::AalenError;

/// Result code of every fallible call in this ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AalenStatus {
    /// The call succeeded.
    Ok = 0,
    /// A required pointer argument was `NULL`.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A JSON document failed to parse or serialize.
    Json = 3,
    /// A model, record, or configuration failed structural validation.
    InvalidSpec = 4,
    /// An argument violated a documented precondition.
    Precondition = 5,
    /// An MCMC run failed a health check.
    ChainDiagnostic = 6,
    /// An input/output error was encountered.
    Io = 7,
    /// A panic was caught at the ABI boundary.
    Panic = 8,
}

/// Opaque handle over an intensity model.
pub struct AalenModel {
    inner: IntensityModel,
}

/// Opaque handle over a simulated counting-process record.
pub struct AalenRecord {
    inner: CountingRecord,
}

/// Opaque handle over a posterior sample (the kept MCMC draws and their
/// per-move acceptance statistics).
pub struct AalenChain {
    inner: PosteriorChain,
}

type Failure = (AalenStatus, String);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(message: &str) {
    let owned = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = owned);
}

fn status_of(err: &AalenError) -> AalenStatus {
    match err {
        AalenError::InvalidSpec(_) | AalenError::DomainMismatch(_) => AalenStatus::InvalidSpec,
        AalenError::Precondition(_)
        | AalenError::NonFinite { .. }
        | AalenError::BoundExceeded { .. } => AalenStatus::Precondition,
        AalenError::ChainDiagnostic(_) => AalenStatus::ChainDiagnostic,
        AalenError::Io(_) => AalenStatus::Io,
        AalenError::Json(_) | AalenError::Config(_) => AalenStatus::Json,
    }
}

fn fail(err: AalenError) -> Failure {
    (status_of(&err), err.to_string())
}

/// Run a fallible body, catching panics and recording the error message.
fn guarded<F>(f: F) -> AalenStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AalenStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            set_last_error(&format!("caught panic: {message}"));
            AalenStatus::Panic
        }
    }
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if ptr.is_null() {
        return Err((AalenStatus::NullArgument, format!("{name} must not be NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| (AalenStatus::InvalidUtf8, format!("{name} is not UTF-8: {e}")))
}

fn ref_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, Failure> {
    unsafe { ptr.as_ref() }
        .ok_or_else(|| (AalenStatus::NullArgument, format!("{name} must not be NULL")))
}

fn out_arg<'a, T>(ptr: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    unsafe { ptr.as_mut() }
        .ok_or_else(|| (AalenStatus::NullArgument, format!("{name} must not be NULL")))
}

fn json_out(value: &impl serde::Serialize, out: &mut *mut c_char) -> Result<(), Failure> {
    let text = serde_json::to_string(value)
        .map_err(|e| (AalenStatus::Json, format!("serialization failed: {e}")))?;
    let owned = CString::new(text)
        .map_err(|e| (AalenStatus::Json, format!("serialized JSON held a NUL byte: {e}")))?;
    *out = owned.into_raw();
    Ok(())
}

/// Version of the library as a static NUL-terminated string.
///
/// The returned pointer is borrowed; do not free it.
#[no_mangle]
pub extern "C" fn aalen_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the most recent failure on the calling thread, or an empty
/// string if none occurred.
///
/// The returned pointer is borrowed and stays valid until the next failing
/// call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn aalen_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Release a string returned through a `char **` out-pointer.
///
/// # Safety
///
/// `ptr` must be a pointer previously returned by this library through a
/// `char **` out-pointer (or `NULL`), and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aalen_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(CString::from_raw(ptr));
    }
}

/// Parse an intensity model from its JSON representation and validate it.
///
/// On success `*out` owns the new handle.
///
/// # Safety
///
/// `json` must be a NUL-terminated string and `out` a valid pointer; the
/// handle written to `*out` must be released with [`aalen_model_free`].
#[no_mangle]
pub unsafe extern "C" fn aalen_model_from_json(
    json: *const c_char,
    out: *mut *mut AalenModel,
) -> AalenStatus {
    guarded(|| {
        let text = cstr_arg(json, "json")?;
        let slot = out_arg(out, "out")?;
        let inner: IntensityModel = serde_json::from_str(text)
            .map_err(|e| (AalenStatus::Json, format!("model JSON parse failed: {e}")))?;
        inner.validate().map_err(fail)?;
        *slot = Box::into_raw(Box::new(AalenModel { inner }));
        Ok(())
    })
}

/// Serialize a model back to JSON.
///
/// # Safety
///
/// `model` must be a live handle and `out` a valid pointer; release the
/// string written to `*out` with [`aalen_string_free`].
#[no_mangle]
pub unsafe extern "C" fn aalen_model_to_json(
    model: *const AalenModel,
    out: *mut *mut c_char,
) -> AalenStatus {
    guarded(|| {
        let model = ref_arg(model, "model")?;
        let slot = out_arg(out, "out")?;
        json_out(&model.inner, slot)
    })
}

/// Evaluate the model's intensity at time `t` (zero outside its domain).
///
/// # Safety
///
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aalen_model_eval(
    model: *const AalenModel,
    t: f64,
    out: *mut f64,
) -> AalenStatus {
    guarded(|| {
        let model = ref_arg(model, "model")?;
        let slot = out_arg(out, "out")?;
        *slot = model.inner.eval(t);
        Ok(())
    })
}

/// Total mass `\int lambda dt` of the model over its domain.
///
/// # Safety
///
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aalen_model_mass(
    model: *const AalenModel,
    out: *mut f64,
) -> AalenStatus {
    guarded(|| {
        let model = ref_arg(model, "model")?;
        let slot = out_arg(out, "out")?;
        *slot = model.inner.mass();
        Ok(())
    })
}

/// Release a model handle.
///
/// # Safety
///
/// `model` must be a handle returned by this library (or `NULL`) and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aalen_model_free(model: *mut AalenModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Simulate one record from a model specification given as JSON (the same
/// schema the CLI `simulate` subcommand accepts).
///
/// # Safety
///
/// `spec_json` must be a NUL-terminated string and `out` a valid pointer;
/// release the handle written to `*out` with [`aalen_record_free`].
#[no_mangle]
pub unsafe extern "C" fn aalen_simulate(
    spec_json: *const c_char,
    seed: u64,
    out: *mut *mut AalenRecord,
) -> AalenStatus {
    guarded(|| {
        let text = cstr_arg(spec_json, "spec_json")?;
        let slot = out_arg(out, "out")?;
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| (AalenStatus::Json, format!("model spec JSON parse failed: {e}")))?;
        let inner = spec.simulate(seed).map_err(fail)?;
        *slot = Box::into_raw(Box::new(AalenRecord { inner }));
        Ok(())
    })
}

/// Parse a previously serialized record and validate it.
///
/// # Safety
///
/// `json` must be a NUL-terminated string and `out` a valid pointer;
/// release the handle written to `*out` with [`aalen_record_free`].
#[no_mangle]
pub unsafe extern "C" fn aalen_record_from_json(
    json: *const c_char,
    out: *mut *mut AalenRecord,
) -> AalenStatus {
    guarded(|| {
        let text = cstr_arg(json, "json")?;
        let slot = out_arg(out, "out")?;
        let inner: CountingRecord = serde_json::from_str(text)
            .map_err(|e| (AalenStatus::Json, format!("record JSON parse failed: {e}")))?;
        inner.validate().map_err(fail)?;
        *slot = Box::into_raw(Box::new(AalenRecord { inner }));
        Ok(())
    })
}

/// Serialize a record back to JSON.
///
/// # Safety
///
/// `record` must be a live handle and `out` a valid pointer; release the
/// string written to `*out` with [`aalen_string_free`].
#[no_mangle]
pub unsafe extern "C" fn aalen_record_to_json(
    record: *const AalenRecord,
    out: *mut *mut c_char,
) -> AalenStatus {
    guarded(|| {
        let record = ref_arg(record, "record")?;
        let slot = out_arg(out, "out")?;
        json_out(&record.inner, slot)
    })
}

/// Number of events in the record.
///
/// # Safety
///
/// `record` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aalen_record_event_count(
    record: *const AalenRecord,
    out: *mut usize,
) -> AalenStatus {
    guarded(|| {
        let record = ref_arg(record, "record")?;
        let slot = out_arg(out, "out")?;
        *slot = record.inner.events.len();
        Ok(())
    })
}

/// Release a record handle.
///
/// # Safety
///
/// `record` must be a handle returned by this library (or `NULL`) and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aalen_record_free(record: *mut AalenRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Exact log-likelihood of `model` against `record`: the total, the event
/// term `sum_i log lambda(t_i)`, and the integral term `\int lambda Y dt`.
/// Any of the three out-pointers may be `NULL` to skip that component.
///
/// # Safety
///
/// `model` and `record` must be live handles; non-`NULL` out-pointers must
/// be valid.
#[no_mangle]
pub unsafe extern "C" fn aalen_log_likelihood(
    model: *const AalenModel,
    record: *const AalenRecord,
    value: *mut f64,
    event_term: *mut f64,
    integral_term: *mut f64,
) -> AalenStatus {
    guarded(|| {
        let model = ref_arg(model, "model")?;
        let record = ref_arg(record, "record")?;
        let ll = log_likelihood(&model.inner, &record.inner).map_err(fail)?;
        if let Some(slot) = value.as_mut() {
            *slot = ll.value;
        }
        if let Some(slot) = event_term.as_mut() {
            *slot = ll.event_term;
        }
        if let Some(slot) = integral_term.as_mut() {
            *slot = ll.integral_term;
        }
        Ok(())
    })
}

/// L1 distance between two models over the hull of their domains.
///
/// # Safety
///
/// `a` and `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aalen_l1_distance(
    a: *const AalenModel,
    b: *const AalenModel,
    out: *mut f64,
) -> AalenStatus {
    guarded(|| {
        let a = ref_arg(a, "a")?;
        let b = ref_arg(b, "b")?;
        let slot = out_arg(out, "out")?;
        *slot = l1_distance(&a.inner, &b.inner);
        Ok(())
    })
}

/// Hellinger distance between two normalized densities (errors unless both
/// models have unit mass).
///
/// # Safety
///
/// `a` and `b` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aalen_hellinger(
    a: *const AalenModel,
    b: *const AalenModel,
    out: *mut f64,
) -> AalenStatus {
    guarded(|| {
        let a = ref_arg(a, "a")?;
        let b = ref_arg(b, "b")?;
        let slot = out_arg(out, "out")?;
        *slot = hellinger(&a.inner, &b.inner).map_err(fail)?;
        Ok(())
    })
}

/// The explicit constant `kappa0(m1, m2, m0_mass)` bounding the working
/// model's KL divergence over the standard neighborhoods.
///
/// # Safety
///
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aalen_kappa0(
    m1: f64,
    m2: f64,
    m0_mass: f64,
    out: *mut f64,
) -> AalenStatus {
    guarded(|| {
        let slot = out_arg(out, "out")?;
        *slot = kappa0(m1, m2, m0_mass).map_err(fail)?;
        Ok(())
    })
}

/// KL divergence of the event process between `lambda0` and `lambda`
/// under the observation environment of `spec_json` (a model
/// specification) with concentration tolerance `alpha`.  `+inf` is
/// returned when the divergence diverges.
///
/// # Safety
///
/// `spec_json` must be a NUL-terminated string, `lambda0` and `lambda`
/// live handles, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aalen_kl_divergence(
    spec_json: *const c_char,
    alpha: f64,
    lambda0: *const AalenModel,
    lambda: *const AalenModel,
    out: *mut f64,
) -> AalenStatus {
    guarded(|| {
        let text = cstr_arg(spec_json, "spec_json")?;
        let lambda0 = ref_arg(lambda0, "lambda0")?;
        let lambda = ref_arg(lambda, "lambda")?;
        let slot = out_arg(out, "out")?;
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| (AalenStatus::Json, format!("model spec JSON parse failed: {e}")))?;
        let env = spec.environment(alpha).map_err(fail)?;
        *slot = kl_aalen(&lambda0.inner, &lambda.inner, &env);
        Ok(())
    })
}

/// Run the posterior sampler selected by `prior_json` (a prior
/// specification tagged by `family`) on `record`.  `mcmc_json` configures
/// the chain; pass `NULL` for the default settings.
///
/// # Safety
///
/// `record` must be a live handle, `prior_json` a NUL-terminated string,
/// `mcmc_json` a NUL-terminated string or `NULL`, and `out` a valid
/// pointer; release the handle written to `*out` with
/// [`aalen_chain_free`].
#[no_mangle]
pub unsafe extern "C" fn aalen_fit(
    record: *const AalenRecord,
    prior_json: *const c_char,
    mcmc_json: *const c_char,
    seed: u64,
    out: *mut *mut AalenChain,
) -> AalenStatus {
    guarded(|| {
        let record = ref_arg(record, "record")?;
        let prior_text = cstr_arg(prior_json, "prior_json")?;
        let slot = out_arg(out, "out")?;
        let prior: PriorSpec = serde_json::from_str(prior_text)
            .map_err(|e| (AalenStatus::Json, format!("prior JSON parse failed: {e}")))?;
        let mcmc: McmcSettings = if mcmc_json.is_null() {
            McmcSettings::default()
        } else {
            let text = cstr_arg(mcmc_json, "mcmc_json")?;
            serde_json::from_str(text)
                .map_err(|e| (AalenStatus::Json, format!("mcmc JSON parse failed: {e}")))?
        };
        let chain = match &prior {
            PriorSpec::Dpm(p) => fit_dpm(&record.inner, p, &mcmc, seed),
            PriorSpec::LogSpline(p) => fit_logspline(&record.inner, p, &mcmc, seed),
            PriorSpec::LogLinear(p) => fit_loglinear(&record.inner, p, &mcmc, seed),
        }
        .map_err(fail)?;
        *slot = Box::into_raw(Box::new(AalenChain { inner: chain }));
        Ok(())
    })
}

/// Number of kept draws in the chain.
///
/// # Safety
///
/// `chain` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aalen_chain_len(
    chain: *const AalenChain,
    out: *mut usize,
) -> AalenStatus {
    guarded(|| {
        let chain = ref_arg(chain, "chain")?;
        let slot = out_arg(out, "out")?;
        *slot = chain.inner.draws.len();
        Ok(())
    })
}

/// Serialize the draw at `index` (zero-based) to model JSON.
///
/// # Safety
///
/// `chain` must be a live handle and `out` a valid pointer; release the
/// string written to `*out` with [`aalen_string_free`].
#[no_mangle]
pub unsafe extern "C" fn aalen_chain_draw_json(
    chain: *const AalenChain,
    index: usize,
    out: *mut *mut c_char,
) -> AalenStatus {
    guarded(|| {
        let chain = ref_arg(chain, "chain")?;
        let slot = out_arg(out, "out")?;
        let draw = chain.inner.draws.get(index).ok_or_else(|| {
            (
                AalenStatus::Precondition,
                format!(
                    "draw index {index} out of range for a chain of {} draws",
                    chain.inner.draws.len()
                ),
            )
        })?;
        json_out(draw, slot)
    })
}

/// Summarize the chain against a reference model: mean/median L1 error,
/// the posterior mass outside the L1 ball of the given radius, and
/// pointwise 5%/95% bands on a fixed grid, serialized as JSON.
///
/// # Safety
///
/// `chain` and `reference` must be live handles and `out` a valid
/// pointer; release the string written to `*out` with
/// [`aalen_string_free`].
#[no_mangle]
pub unsafe extern "C" fn aalen_chain_summary_json(
    chain: *const AalenChain,
    reference: *const AalenModel,
    radius: f64,
    out: *mut *mut c_char,
) -> AalenStatus {
    guarded(|| {
        let chain = ref_arg(chain, "chain")?;
        let reference = ref_arg(reference, "reference")?;
        let slot = out_arg(out, "out")?;
        let summary = posterior_summary(&chain.inner, &reference.inner, radius).map_err(fail)?;
        json_out(&summary, slot)
    })
}

/// Release a chain handle.
///
/// # Safety
///
/// `chain` must be a handle returned by this library (or `NULL`) and must
/// not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn aalen_chain_free(chain: *mut AalenChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

//! Forecasting engine for daily hospital admission counts.
//!
//! The crate covers the whole modelling path for ward- and complexity-level
//! admission series: synthetic data generation, counterfactual imputation of
//! anomalous periods, feature engineering with 14-day input windows, three
//! 7-day-ahead forecasters (seasonal ARIMA with exogenous regressors,
//! gradient-boosted trees and a stacked LSTM), a seasonal-naive baseline, the
//! MAE/MAPE evaluation protocol, grid search and tree explanations.
//!
//! Everything here is pure computation over in-memory data and builds without
//! `std` (an allocator is required). File formats, plotting and the command
//! line live in the companion `wardcast` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unconditional_recursion)]
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod calendar;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod explain;
pub mod features;
pub mod gbt;
pub mod imputer;
pub mod linalg;
pub mod lstm;
pub(crate) mod math;
pub mod optim;
pub mod rng;
pub mod sarimax;
pub mod synthgen;
pub mod tuner;

pub use calendar::CalendarDate;
pub use dataset::{Complexity, CovariateRecord, CovariateTable, DailySeries, Dataset, SeriesKey, Ward};
pub use error::{Error, Result};

/// Input window length in days.
pub const INPUT_DAYS: usize = 14;
/// Forecast horizon in days.
pub const HORIZON: usize = 7;

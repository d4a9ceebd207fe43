//! File formats, evaluation harness and command-line front end for
//! [`hornets_core`].

pub mod bench;
pub mod cli;
pub mod csv_io;
pub mod error;
pub mod model_file;

pub use bench::{grid_search, run_cv, CvOptions, EvalReport, GridSpec};
pub use csv_io::{load_csv, save_csv};
pub use error::{AppError, Result};
pub use model_file::ModelFile;

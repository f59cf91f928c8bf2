//! Datasets, preprocessing, splitting, generators and cached downloads.

mod csv_io;
mod dataset;
mod fetch;
mod preprocess;
mod split;
mod synth;

pub use csv_io::{load_csv, load_csv_with, parse_table, ColumnRef, CsvOptions, Delimiter, LoadedCsv, MISSING_TOKENS};
pub use dataset::{Dataset, Standardization};
pub use fetch::{
    cache_path, fetch_dataset, fetch_with, find_entry, load_manifest, parse_manifest, DefaultTransport, FetchedFile,
    ManifestEntry, Transport, CHECKSUM_PREFIX_LEN, PINS_FILE, QUARANTINE_DIR,
};
pub use preprocess::{
    angle_to_unit_circle, apply_standardization, compass_to_unit_circle, destandardize, fit_standardization, standardize,
    CONSTANT_COLUMN_STD,
};
pub use split::{split, SplitSpec, FRACTION_SUM_TOLERANCE};
pub use synth::{synth_bimodal, synth_cos2, synth_heteroscedastic, BimodalSpec, COS2_TOY_NOISE, COS2_TOY_POINTS};

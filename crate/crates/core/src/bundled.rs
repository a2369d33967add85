//! Problem specs shipped with the crate.

/// `(name, document)` pairs.
pub const SPECS: &[(&str, &str)] = &[
    ("airy", include_str!("../specs/airy.spec")),
    ("hermite", include_str!("../specs/hermite.spec")),
    ("polynomial_data", include_str!("../specs/polynomial_data.spec")),
    ("polynomial_point", include_str!("../specs/polynomial_point.spec")),
    ("beta_series", include_str!("../specs/beta_series.spec")),
    ("hermite_forced", include_str!("../specs/hermite_forced.spec")),
];

pub fn get(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".spec").unwrap_or(name);
    SPECS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

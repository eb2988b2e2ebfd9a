//! Canonical anomaly category labels and alias normalization.

/// The 13-class closed label set used for category judging, in canonical
/// lowercase form.
pub const CANONICAL_CATEGORIES: [&str; 13] = [
    "abuse",
    "arrest",
    "arson",
    "assault",
    "burglary",
    "explosion",
    "fighting",
    "roadaccidents",
    "robbery",
    "shoplifting",
    "shooting",
    "stealing",
    "vandalism",
];

/// Label returned whenever a prediction cannot be resolved to the closed set.
pub const UNKNOWN_LABEL: &str = "unknown";

const ALIASES: [(&str, &str); 14] = [
    ("accident", "roadaccidents"),
    ("accidents", "roadaccidents"),
    ("road accident", "roadaccidents"),
    ("road accidents", "roadaccidents"),
    ("roadaccident", "roadaccidents"),
    ("car accident", "roadaccidents"),
    ("traffic accident", "roadaccidents"),
    ("fight", "fighting"),
    ("fights", "fighting"),
    ("shoplift", "shoplifting"),
    ("shoot", "shooting"),
    ("steal", "stealing"),
    ("rob", "robbery"),
    ("vandal", "vandalism"),
];

pub fn is_canonical(label: &str) -> bool {
    CANONICAL_CATEGORIES.contains(&label)
}

/// Maps a raw label to its canonical form via a deterministic,
/// case-insensitive lookup. Unmapped input becomes [`UNKNOWN_LABEL`].
pub fn normalize_alias(raw: &str) -> String {
    let lowered = raw.trim().to_lowercase();
    if is_canonical(&lowered) || lowered == UNKNOWN_LABEL {
        return lowered;
    }
    for (alias, canonical) in ALIASES {
        if lowered == alias {
            return canonical.to_string();
        }
    }
    UNKNOWN_LABEL.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_labels_map_to_themselves() {
        for label in CANONICAL_CATEGORIES {
            assert_eq!(normalize_alias(label), label);
        }
    }

    #[test]
    fn documented_aliases() {
        assert_eq!(normalize_alias("accident"), "roadaccidents");
        assert_eq!(normalize_alias("fight"), "fighting");
    }

    #[test]
    fn case_variants_normalize() {
        assert_eq!(normalize_alias("Robbery"), "robbery");
        assert_eq!(normalize_alias("  ARSON "), "arson");
    }

    #[test]
    fn unmapped_becomes_unknown() {
        assert_eq!(normalize_alias("juggling"), "unknown");
        assert_eq!(normalize_alias(""), "unknown");
    }
}

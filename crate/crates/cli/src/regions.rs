//! Desikan-Killiany cortical regions, in row order 1..=68.

pub const DESIKAN_KILLIANY: [&str; 68] = [
    "ctx-lh-bankssts",
    "ctx-lh-caudalanteriorcingulate",
    "ctx-lh-caudalmiddlefrontal",
    "ctx-lh-cuneus",
    "ctx-lh-entorhinal",
    "ctx-lh-frontalpole",
    "ctx-lh-fusiform",
    "ctx-lh-inferiorparietal",
    "ctx-lh-inferiortemporal",
    "ctx-lh-insula",
    "ctx-lh-isthmuscingulate",
    "ctx-lh-lateraloccipital",
    "ctx-lh-lateralorbitofrontal",
    "ctx-lh-lingual",
    "ctx-lh-medialorbitofrontal",
    "ctx-lh-middletemporal",
    "ctx-lh-paracentral",
    "ctx-lh-parahippocampal",
    "ctx-lh-parsopercularis",
    "ctx-lh-parsorbitalis",
    "ctx-lh-parstriangularis",
    "ctx-lh-pericalcarine",
    "ctx-lh-postcentral",
    "ctx-lh-posteriorcingulate",
    "ctx-lh-precentral",
    "ctx-lh-precuneus",
    "ctx-lh-rostralanteriorcingulate",
    "ctx-lh-rostralmiddlefrontal",
    "ctx-lh-superiorfrontal",
    "ctx-lh-superiorparietal",
    "ctx-lh-superiortemporal",
    "ctx-lh-supramarginal",
    "ctx-lh-temporalpole",
    "ctx-lh-transversetemporal",
    "ctx-rh-bankssts",
    "ctx-rh-caudalanteriorcingulate",
    "ctx-rh-caudalmiddlefrontal",
    "ctx-rh-cuneus",
    "ctx-rh-entorhinal",
    "ctx-rh-frontalpole",
    "ctx-rh-fusiform",
    "ctx-rh-inferiorparietal",
    "ctx-rh-inferiortemporal",
    "ctx-rh-insula",
    "ctx-rh-isthmuscingulate",
    "ctx-rh-lateraloccipital",
    "ctx-rh-lateralorbitofrontal",
    "ctx-rh-lingual",
    "ctx-rh-medialorbitofrontal",
    "ctx-rh-middletemporal",
    "ctx-rh-paracentral",
    "ctx-rh-parahippocampal",
    "ctx-rh-parsopercularis",
    "ctx-rh-parsorbitalis",
    "ctx-rh-parstriangularis",
    "ctx-rh-pericalcarine",
    "ctx-rh-postcentral",
    "ctx-rh-posteriorcingulate",
    "ctx-rh-precentral",
    "ctx-rh-precuneus",
    "ctx-rh-rostralanteriorcingulate",
    "ctx-rh-rostralmiddlefrontal",
    "ctx-rh-superiorfrontal",
    "ctx-rh-superiorparietal",
    "ctx-rh-superiortemporal",
    "ctx-rh-supramarginal",
    "ctx-rh-temporalpole",
    "ctx-rh-transversetemporal",
];

/// Atlas name for 1-based `index` when the matrix has exactly 68 rows,
/// otherwise `region-<index>`.
pub fn region_name(index: usize, n_regions: usize) -> String {
    if n_regions == DESIKAN_KILLIANY.len() {
        DESIKAN_KILLIANY[index - 1].to_string()
    } else {
        format!("region-{index}")
    }
}

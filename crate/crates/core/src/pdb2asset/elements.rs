//! Embedded periodic-table subset: covalent radii (Å), van der Waals radii
//! (Å) and CPK display colors.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementData {
    pub symbol: &'static str,
    pub covalent_radius: f64,
    pub vdw_radius: f64,
    pub color: [u8; 3],
}

const fn el(symbol: &'static str, covalent_radius: f64, vdw_radius: f64, rgb: u32) -> ElementData {
    ElementData {
        symbol,
        covalent_radius,
        vdw_radius,
        color: [(rgb >> 16) as u8, (rgb >> 8) as u8, rgb as u8],
    }
}

/// Used for symbols missing from [`ELEMENTS`].
pub const UNKNOWN_ELEMENT: ElementData = el("X", 1.50, 2.00, 0xFF1493);

pub const ELEMENTS: &[ElementData] = &[
    el("H", 0.31, 1.20, 0xFFFFFF),
    el("He", 0.28, 1.40, 0xD9FFFF),
    el("Li", 1.28, 1.82, 0xCC80FF),
    el("Be", 0.96, 1.53, 0xC2FF00),
    el("B", 0.84, 1.92, 0xFFB5B5),
    el("C", 0.76, 1.70, 0x909090),
    el("N", 0.71, 1.55, 0x3050F8),
    el("O", 0.66, 1.52, 0xFF0D0D),
    el("F", 0.57, 1.47, 0x90E050),
    el("Ne", 0.58, 1.54, 0xB3E3F5),
    el("Na", 1.66, 2.27, 0xAB5CF2),
    el("Mg", 1.41, 1.73, 0x8AFF00),
    el("Al", 1.21, 1.84, 0xBFA6A6),
    el("Si", 1.11, 2.10, 0xF0C8A0),
    el("P", 1.07, 1.80, 0xFF8000),
    el("S", 1.05, 1.80, 0xFFFF30),
    el("Cl", 1.02, 1.75, 0x1FF01F),
    el("Ar", 1.06, 1.88, 0x80D1E3),
    el("K", 2.03, 2.75, 0x8F40D4),
    el("Ca", 1.76, 2.31, 0x3DFF00),
    el("Ti", 1.60, 2.00, 0xBFC2C7),
    el("Cr", 1.39, 2.00, 0x8A99C7),
    el("Mn", 1.39, 2.00, 0x9C7AC7),
    el("Fe", 1.32, 2.00, 0xE06633),
    el("Co", 1.26, 2.00, 0xF090A0),
    el("Ni", 1.24, 1.63, 0x50D050),
    el("Cu", 1.32, 1.40, 0xC88033),
    el("Zn", 1.22, 1.39, 0x7D80B0),
    el("Se", 1.20, 1.90, 0xFFA100),
    el("Br", 1.20, 1.85, 0xA62929),
    el("Ag", 1.45, 1.72, 0xC0C0C0),
    el("Cd", 1.44, 1.58, 0xFFD98F),
    el("Sn", 1.39, 2.17, 0x668080),
    el("I", 1.39, 1.98, 0x940094),
    el("Pt", 1.36, 1.75, 0xD0D0E0),
    el("Au", 1.36, 1.66, 0xFFD123),
    el("Hg", 1.32, 1.55, 0xB8B8D0),
    el("Pb", 1.46, 2.02, 0x575961),
];

/// Looks up a symbol case-insensitively.
pub fn lookup(symbol: &str) -> Option<&'static ElementData> {
    ELEMENTS.iter().find(|e| e.symbol.eq_ignore_ascii_case(symbol))
}

pub fn element_data(symbol: &str) -> &'static ElementData {
    lookup(symbol).unwrap_or(&UNKNOWN_ELEMENT)
}

/// `"FE"` / `"fe"` → `"Fe"`.
pub fn normalize_symbol(raw: &str) -> String {
    let mut chars = raw.chars().filter(|c| c.is_ascii_alphabetic());
    let mut out = String::new();
    if let Some(first) = chars.next() {
        out.push(first.to_ascii_uppercase());
    }
    out.extend(chars.map(|c| c.to_ascii_lowercase()));
    out
}

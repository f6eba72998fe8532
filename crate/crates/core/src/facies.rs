//! The fixed nine-category facies catalog.

/// Number of categories.
pub const K: usize = 9;

/// Air / above-terrain category.
pub const AIR: u8 = 1;
pub const MOLLY_DARLING_SANDSTONE: u8 = 2;
pub const IGNIMBRITE: u8 = 3;
pub const MT_JANET_ANDESITE: u8 = 4;
pub const CONGLOMERATE: u8 = 5;
pub const SILTSTONE_MUDSTONE: u8 = 6;
pub const SURFACE_SAND_SOIL: u8 = 7;
pub const OUTER_ARGILLIC: u8 = 8;
pub const PHYLLIC_SILICIFICATION: u8 = 9;

/// All ids in catalog order.
pub const ALL: [u8; K] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

/// Host facies a deposited layer may take (excludes air, soil veneer, and
/// the two alteration categories, which are produced by later events).
pub const DEPOSIT_HOSTS: [u8; 5] = [
    MOLLY_DARLING_SANDSTONE,
    IGNIMBRITE,
    MT_JANET_ANDESITE,
    CONGLOMERATE,
    SILTSTONE_MUDSTONE,
];

pub fn is_valid(id: u8) -> bool {
    (1..=K as u8).contains(&id)
}

pub fn name(id: u8) -> &'static str {
    match id {
        1 => "Air",
        2 => "Molly Darling Sandstone",
        3 => "Ignimbrite",
        4 => "Mt Janet Andesite",
        5 => "Conglomerate",
        6 => "Siltstone/Mudstone",
        7 => "Surface Sand/Soil",
        8 => "Outer Argillic Alteration",
        9 => "Phyllic + Silicification",
        _ => "Unknown",
    }
}

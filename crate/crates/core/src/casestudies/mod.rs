//! Desk-scale reproductions of the strain and magnetic-bearing case studies.

pub mod bearing;
pub mod scenario;
pub mod strain;

/// A shipped pipeline and the data manifest it runs with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fixture {
    pub name: &'static str,
    pub text: &'static str,
    pub manifest: &'static str,
}

pub const MINIMAL: Fixture = Fixture {
    name: "minimal",
    text: include_str!("../../fixtures/minimal.fdf"),
    manifest: "source X = X.csv\nsource Y = Y.csv\n",
};

pub const STRAIN_LEARNING: Fixture = Fixture {
    name: "strain_learning",
    text: include_str!("../../fixtures/strain_learning.fdf"),
    manifest: "source F = F.csv\n",
};

pub const STRAIN_EXPLOITATION: Fixture = Fixture {
    name: "strain_exploitation",
    text: include_str!("../../fixtures/strain_exploitation.fdf"),
    manifest: "source img = img.csv\nsink expand.eps = eps_pred.csv\n",
};

pub const STRAIN_MISWIRED: Fixture = Fixture {
    name: "strain_miswired",
    text: include_str!("../../fixtures/strain_miswired.fdf"),
    manifest: "source img = img.csv\n",
};

pub const BEARING_LEARNING: Fixture = Fixture {
    name: "bearing_learning",
    text: include_str!("../../fixtures/bearing_learning.fdf"),
    manifest: "source VE = VE.csv\nsource VH = VH.csv\nsource phiH = phiH.csv\n",
};

pub const BEARING_EXPLOITATION: Fixture = Fixture {
    name: "bearing_exploitation",
    text: include_str!("../../fixtures/bearing_exploitation.fdf"),
    manifest: "source V = V.csv\nsink cauer.phic = phic.csv\nsink twin.phi = phi_pred.csv\n",
};

pub const BEARING_VARIANT: Fixture = Fixture {
    name: "bearing_variant",
    text: include_str!("../../fixtures/bearing_variant.fdf"),
    manifest: "source VE = VE.csv\nsource VH = VH.csv\nsource phiH = phiH.csv\n",
};

pub const BEARING_VARIANT_EXPLOITATION: Fixture = Fixture {
    name: "bearing_variant_exploitation",
    text: include_str!("../../fixtures/bearing_variant_exploitation.fdf"),
    manifest: "source V = V.csv\nsink cauer.phic = phic.csv\nsink ign.phi = phi_pred.csv\n",
};

/// Every shipped pipeline, learning fixtures before their exploitation
/// counterparts.
pub fn fixtures() -> Vec<Fixture> {
    vec![
        MINIMAL,
        STRAIN_LEARNING,
        STRAIN_EXPLOITATION,
        STRAIN_MISWIRED,
        BEARING_LEARNING,
        BEARING_EXPLOITATION,
        BEARING_VARIANT,
        BEARING_VARIANT_EXPLOITATION,
    ]
}

"""Physics constants: particle masses, widths, lifetimes and PDG codes.

Masses and widths in GeV, decay lengths (c*tau) in mm.  Values rounded to
PDG precision; everything downstream reads from these tables so there is a
single source of truth.
"""

from __future__ import annotations

SQRT_S = 91.19  # e+e- collision energy at the Z peak (GeV)

# Z hadronic branching fractions used for yield scaling.
R_B = 0.2158
R_C = 0.1722

# PDG codes used throughout.
PDG_B = 5
PDG_C = 4
PDG_GAMMA = 22
PDG_PI0 = 111
PDG_PIP = 211
PDG_RHOP = 213
PDG_RHO0 = 113
PDG_ETA = 221
PDG_OMEGA = 223
PDG_KP = 321
PDG_KL = 130
PDG_KS = 310
PDG_KSTAR0 = 313
PDG_KSTARP = 323
PDG_PHI = 333
PDG_PROTON = 2212
PDG_NEUTRON = 2112
PDG_D0 = 421
PDG_DP = 411
PDG_DS = 431
PDG_DSTAR0 = 423
PDG_DSTARP = 413
PDG_LAMBDAC = 4122
PDG_B0 = 511
PDG_BP = 521
PDG_BS = 531
PDG_LAMBDAB = 5122

MASS_GEV = {
    PDG_GAMMA: 0.0,
    PDG_PI0: 0.1349768,
    PDG_PIP: 0.13957039,
    PDG_RHOP: 0.77511,
    PDG_RHO0: 0.77526,
    PDG_ETA: 0.547862,
    PDG_OMEGA: 0.78266,
    PDG_KP: 0.493677,
    PDG_KL: 0.497611,
    PDG_KS: 0.497611,
    PDG_KSTAR0: 0.89555,
    PDG_KSTARP: 0.89176,
    PDG_PHI: 1.019461,
    PDG_PROTON: 0.9382721,
    PDG_NEUTRON: 0.9395654,
    PDG_D0: 1.86484,
    PDG_DP: 1.86966,
    PDG_DS: 1.96835,
    PDG_DSTAR0: 2.00685,
    PDG_DSTARP: 2.01026,
    PDG_LAMBDAC: 2.28646,
    PDG_B0: 5.27966,
    PDG_BP: 5.27934,
    PDG_BS: 5.36692,
    PDG_LAMBDAB: 5.61960,
}

# Breit-Wigner full widths for the broad resonances whose line shape is
# sampled at generation time.  Narrow states (pi0, B, D, Ds, ...) are kept
# at their nominal mass.
WIDTH_GEV = {
    PDG_RHOP: 0.1491,
    PDG_RHO0: 0.1474,
    PDG_OMEGA: 0.00868,
    PDG_KSTAR0: 0.0473,
    PDG_KSTARP: 0.0503,
    PDG_PHI: 0.004249,
}

# c*tau in mm for weakly decaying hadrons; particles absent from this table
# decay at their production point (strong/EM decays) or never (stable).
CTAU_MM = {
    PDG_B0: 0.4554,
    PDG_BP: 0.4911,
    PDG_BS: 0.4544,
    PDG_LAMBDAB: 0.4410,
    PDG_D0: 0.12295,
    PDG_DP: 0.3118,
    PDG_DS: 0.1512,
    PDG_LAMBDAC: 0.0605,
    PDG_KS: 26.844,
}

# Particles the detector never sees decay: charged pions/kaons and K_L fly
# out, baryons and photons are terminal in this model.
STABLE_PDGS = frozenset({
    PDG_GAMMA, PDG_PIP, -PDG_PIP, PDG_KP, -PDG_KP, PDG_KL,
    PDG_PROTON, -PDG_PROTON, PDG_NEUTRON, -PDG_NEUTRON,
})

PI0_MASS = MASS_GEV[PDG_PI0]
ETA_MASS = MASS_GEV[PDG_ETA]
B0_MASS = MASS_GEV[PDG_B0]
BS_MASS = MASS_GEV[PDG_BS]
DS_MASS = MASS_GEV[PDG_DS]
BS_B0_DELTA_M = BS_MASS - B0_MASS


def mass_of(pdg: int) -> float:
    """Nominal mass for a PDG code (sign-insensitive)."""
    try:
        return MASS_GEV[abs(pdg)]
    except KeyError:
        raise KeyError(f"no mass entry for PDG code {pdg}") from None


def width_of(pdg: int) -> float:
    """Breit-Wigner width, 0.0 for states generated at fixed mass."""
    return WIDTH_GEV.get(abs(pdg), 0.0)


def ctau_of(pdg: int) -> float:
    """Decay length c*tau in mm, 0.0 for prompt decays."""
    return CTAU_MM.get(abs(pdg), 0.0)


def charge_of(pdg: int) -> int:
    """Electric charge in units of e for the hadrons used here."""
    sign = 1 if pdg > 0 else -1
    a = abs(pdg)
    if a in (PDG_PIP, PDG_RHOP, PDG_KP, PDG_KSTARP, PDG_DP, PDG_DS,
             PDG_DSTARP, PDG_BP, PDG_PROTON, PDG_LAMBDAC):
        return sign
    return 0


def is_stable(pdg: int) -> bool:
    return pdg in STABLE_PDGS or abs(pdg) in STABLE_PDGS

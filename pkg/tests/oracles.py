"""Independent scalar recomputations of the slot model, written with ``math`` only."""
import math


def slot_chain(D, d, g2, phi, f, p, fe, *, K=6, B=0.2e6, sigma2=1e-11, beta0=1e-3, alpha=-2.0,
               C=300.0, k_loc=1e-27, x=1.2, y=1.5, v_s=4e6, p_s=1e-8):
    t_s = D / v_s
    e_s = p_s * D
    lam = D / phi ** x
    t_en = C * lam / f
    e_en = C * k_loc * lam * f * f
    gain = beta0 * d ** alpha * g2
    u = (B / K) * math.log(1 + p * gain / sigma2, 2)
    t_up = D * phi / u
    e_up = t_up * p
    t_de = C * D * phi / (phi ** y * fe)
    t_dt = t_en + t_up + t_de
    return {
        "t_s": t_s, "e_s": e_s, "lam": lam, "t_en": t_en, "e_en": e_en, "gain2": gain, "rate": u,
        "t_up": t_up, "e_up": e_up, "t_de": t_de, "t_dt": t_dt, "t_total": t_s + t_dt,
        "e_total": e_s + e_en + e_up,
    }

"""Command line entry point: verify | profile | evans | simulate | all.

Config files are INI style (key = value lines under [section] headers);
``--set section.key=value`` overrides any key.  Every run writes the fully
resolved config next to its outputs.
"""
import argparse
import configparser
import io
import json
import math
import os
import sys
import traceback

import numpy as np

SCHEMA_VERSION = 1

EXIT_OK, EXIT_ERROR, EXIT_DOMAIN, EXIT_INCONCLUSIVE = 0, 1, 2, 3

DEFAULTS = {
    "model": {"preset": "burgers-linear", "eps": "0.2", "L": "1.0",
              "f": "", "M": "", "u_minus": "", "u_plus": ""},
    "profile": {"h": "1e-3", "rtol": "1e-13", "atol": "1e-15", "tail_tol": "1e-10"},
    "evans": {"R": "", "r": "", "n_init": "48", "max_refine": "14", "budget": "4096",
              "delta0": "1e-2", "rtol": "1e-10", "workers": "0", "oracle_N": "2000",
              "double_R": "true", "method": "limit"},
    "simulate": {"amplitude": "1e-2", "kind": "gaussian", "center": "0.0", "width": "2.0",
                 "T_final": "400", "h": "0.02", "cfl": "0.45", "dt_log": "1.0",
                 "X_dom": "", "k": "1", "M_w": "1.0", "delta": "0.1"},
    "bands": {"Linf": "0.35,0.65", "L2": "0.13,0.37", "alpha_dot": "0.35,0.65"},
    "output": {"dir": "out"},
    "run": {"seed": "0"},
}


class ConfigError(ValueError):
    pass


def fmt(v):
    return format(float(v), ".17g")


def load_config(path=None, overrides=()):
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh, source=path)
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from e
        except OSError as e:
            raise ConfigError(str(e)) from e
        for sec in cp.sections():
            if sec not in DEFAULTS:
                raise ConfigError(f"{path}: unknown section [{sec}]")
            for key in cp[sec]:
                if key not in DEFAULTS[sec]:
                    raise ConfigError(f"{path}: unknown key {sec}.{key}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        k, v = item.split("=", 1)
        sec, key = k.strip().split(".", 1)
        if sec not in DEFAULTS or key not in DEFAULTS[sec]:
            raise ConfigError(f"override {item!r}: unknown key {sec}.{key}")
        cp[sec][key] = v.strip()
    return cp


def dump_config(cp):
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _num(cp, sec, key, conv=float):
    raw = cp[sec][key]
    try:
        return conv(raw)
    except ValueError as e:
        raise ConfigError(f"[{sec}] {key} = {raw!r}: {e}") from e


def _opt(cp, sec, key):
    return None if cp[sec][key].strip() == "" else _num(cp, sec, key)


def build_spec(cp):
    from .model import ModelSpec, preset
    m = cp["model"]
    if m["f"].strip():
        try:
            f = [c.strip() for c in m["f"].split(",")]
            M = [c.strip() for c in m["M"].split(",")]
            spec = ModelSpec(f, M, _num(cp, "model", "L"), _num(cp, "model", "u_minus"),
                             _num(cp, "model", "u_plus"), name="custom")
        except (ValueError, ArithmeticError) as e:
            raise ConfigError(f"[model] custom polynomial: {e}") from e
        return spec
    if not m["preset"].strip():
        raise ConfigError("[model] neither preset nor f/M coefficients given")
    try:
        spec = preset(m["preset"].strip(), _num(cp, "model", "eps"), _num(cp, "model", "L"))
    except ValueError as e:
        raise ConfigError(f"[model] {e}") from e
    if m["u_minus"].strip() or m["u_plus"].strip():
        from .model import ModelSpec as MS
        spec = MS(spec.f_coeffs, spec.M_coeffs, spec.L,
                  _opt(cp, "model", "u_minus") if m["u_minus"].strip() else spec.u_minus,
                  _opt(cp, "model", "u_plus") if m["u_plus"].strip() else spec.u_plus, spec.name)
    return spec


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    return o


def write_json(path, obj):
    obj = dict(obj)
    obj["schema_version"] = SCHEMA_VERSION
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")


class Run:
    def __init__(self, cp, out):
        self.cp = cp
        self.out = out
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "effective_config.ini"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(dump_config(cp))
        self.spec = build_spec(cp)
        self._profile = None

    def path(self, name):
        return os.path.join(self.out, name)

    def profile(self, h=None, rtol=None):
        from .profile import build_profile
        if self._profile is None or h is not None:
            p = build_profile(self.spec, h=h or _num(self.cp, "profile", "h"),
                              rtol=rtol or _num(self.cp, "profile", "rtol"),
                              atol=_num(self.cp, "profile", "atol"),
                              tail_tol=_num(self.cp, "profile", "tail_tol"))
            if h is not None:
                return p
            self._profile = p
        return self._profile


def cmd_verify(run):
    from .model import check_assumptions
    pre = check_assumptions(run.spec)
    if not pre.passed:
        write_json(run.path("assumptions.json"), {"model": run.spec.as_dict(),
                                                  "report": pre.as_dict(),
                                                  "failed": pre.failed()})
        print("assumption failure: " + ", ".join(pre.failed()), file=sys.stderr)
        return EXIT_DOMAIN
    p = run.profile()
    rep = check_assumptions(run.spec, p.aprime0, p.b0)
    write_json(run.path("assumptions.json"), {"model": run.spec.as_dict(),
                                              "aprime0": p.aprime0, "b0": p.b0,
                                              "report": rep.as_dict(), "failed": rep.failed()})
    if not rep.passed:
        print("assumption failure: " + ", ".join(rep.failed()), file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_profile(run, refine=False):
    from .model import check_assumptions
    from .profile import save_profile, verify_profile
    pre = check_assumptions(run.spec)
    if not pre.passed:
        print("assumption failure: " + ", ".join(pre.failed()), file=sys.stderr)
        return EXIT_DOMAIN
    p = run.profile()
    save_profile(p, run.path("profile.csv"), run.path("profile.json"))
    rep = verify_profile(p, run.spec)
    if refine:
        h = p.h
        p2 = run.profile(h=h / 2, rtol=_num(run.cp, "profile", "rtol") / 4)
        k1 = np.round(p.x / h).astype(np.int64)
        k2 = np.round(2 * p2.x / h).astype(np.int64)
        even = np.flatnonzero(k2 % 2 == 0)
        _, i1, j = np.intersect1d(k1, k2[even] // 2, return_indices=True)
        i2 = even[j]
        rep["refine"] = {"h": h / 2, "nodes": int(len(i1)),
                         "max_node_change": float(np.max(np.abs(p.U[i1] - p2.U[i2])))}
    write_json(run.path("profile_report.json"), rep)
    return EXIT_OK if rep["monotonicity_violations"] == 0 else EXIT_DOMAIN


def _evans_rows(samples, side):
    rows = []
    for _, s in samples:
        d = s.D_minus if side == "minus" else s.D_plus
        rows.append((s.lam.real, s.lam.imag, d.real, d.imag, s.scale_log))
    return rows


def cmd_evans(run):
    from . import evans as ev
    cp = run.cp
    p = run.profile()
    if p.subshock:
        write_json(run.path("winding.json"), {"model": run.spec.as_dict(),
                                              "condition_D": "not applicable: subshock"})
        print("profile has a subshock; Evans verification needs a smooth profile",
              file=sys.stderr)
        return EXIT_DOMAIN
    ctx = ev.make_context(run.spec, p, delta0=_num(cp, "evans", "delta0"),
                          rtol=_num(cp, "evans", "rtol"))
    workers = int(_num(cp, "evans", "workers")) or None
    budget = int(_num(cp, "evans", "budget"))
    method = cp["evans"]["method"].strip()
    if method not in ("limit", "band"):
        raise ConfigError(f"[evans] method = {method!r}: expected limit or band")
    n_init = int(_num(cp, "evans", "n_init"))
    levels = int(_num(cp, "evans", "max_refine"))
    result = {"model": run.spec.as_dict()}
    contours = {}
    for kind in ("punctured", "circle"):
        c = ev.default_contour(run.spec, kind=kind, R=_opt(cp, "evans", "R"),
                               r=_opt(cp, "evans", "r"))
        c.n_init, c.max_refine = n_init, levels
        contours[kind] = c
    if cp["evans"]["double_R"].strip().lower() in ("1", "true", "yes"):
        c = contours["punctured"]
        contours["doubled"] = ev.ContourSpec(2 * c.R, c.r, "punctured", n_init, levels)
    out = {}
    for kind, c in contours.items():
        samples, ok = ev.sample_contour(ctx, c, method, workers, max_samples=budget)
        for side in ("minus", "plus"):
            w = ev.winding_number(ctx, c, side, samples=samples)
            w.conclusive = w.conclusive and ok
            out[f"{kind}_{side}"] = {"winding": w.winding, "raw": w.raw,
                                     "max_jump": w.max_jump, "conclusive": w.conclusive,
                                     "samples": w.n_samples, "R": c.R, "r": c.r}
            if kind != "doubled":
                write_csv(run.path(f"evans_{kind}_{side}.csv"),
                          ("re_lambda", "im_lambda", "re_D", "im_D", "scale_log"),
                          _evans_rows(samples, side))
    result["winding"] = out
    N = int(_num(cp, "evans", "oracle_N"))
    sel, allev = ev.integrated_eigen_oracle(p, run.spec.L, N=N)
    result["oracle"] = {"N": N, "count_re_gt_1e-3": int(len(sel)),
                        "eigenvalues": [[float(l.real), float(l.imag)] for l in sel],
                        "max_real": float(np.max(allev.real))}
    conclusive = all(v["conclusive"] for v in out.values())
    rhp = [v["winding"] for k, v in out.items() if not k.startswith("circle")]
    zero_free = all(w == 0 for w in rhp)
    agree = all(out[f"punctured_{s}"]["winding"] == len(sel) for s in ("minus", "plus"))
    if not conclusive:
        verdict = EXIT_INCONCLUSIVE
    elif not zero_free:
        verdict = EXIT_DOMAIN
        c = contours["punctured"]
        result["localization"] = [
            {"box": list(b), "winding": w, "conclusive": ok}
            for b, w, ok in ev.localize_zeros(ctx, (c.r, c.R, -c.R, c.R), "minus", method,
                                              workers)]
    elif not agree:
        verdict = EXIT_INCONCLUSIVE
    else:
        verdict = EXIT_OK
    result["condition_D"] = {EXIT_OK: "verified", EXIT_DOMAIN: "zero detected",
                             EXIT_INCONCLUSIVE: "inconclusive"}[verdict]
    result["oracle_agrees"] = bool(agree)
    write_json(run.path("winding.json"), result)
    return verdict


def cmd_simulate(run):
    from . import simulate as sm
    cp = run.cp
    s = cp["simulate"]
    cfg = sm.SimConfig(amplitude=_num(cp, "simulate", "amplitude"), kind=s["kind"].strip(),
                       center=_num(cp, "simulate", "center"), width=_num(cp, "simulate", "width"),
                       T_final=_num(cp, "simulate", "T_final"), h=_num(cp, "simulate", "h"),
                       cfl=_num(cp, "simulate", "cfl"), dt_log=_num(cp, "simulate", "dt_log"),
                       X_dom=_opt(cp, "simulate", "X_dom"), k=int(_num(cp, "simulate", "k")),
                       M_w=_num(cp, "simulate", "M_w"), delta=_num(cp, "simulate", "delta"),
                       seed=int(_num(cp, "run", "seed")))
    if cfg.T_final < 8 * cfg.dt_log:
        print(f"T_final={cfg.T_final} too small for the fit window (needs >= 8 dt_log)",
              file=sys.stderr)
        return EXIT_ERROR
    p = run.profile()
    try:
        dec, en = sm.run(cfg, run.spec, p)
    except sm.TrackingError as e:
        write_json(run.path("simulate.json"), {"aborted": True, "message": str(e)})
        print(str(e), file=sys.stderr)
        return EXIT_DOMAIN
    rows = zip(dec.t, dec.L1, dec.L2, dec.Linf, dec.alpha, dec.alpha_dot, en.E)
    write_csv(run.path("decay.csv"), ("t", "L1", "L2", "Linf", "alpha", "alpha_dot",
                                      f"E_{en.k}"), rows)
    bands = {k: [float(v) for v in cp["bands"][k].split(",")] for k in ("Linf", "L2", "alpha_dot")}
    checks = {}
    for k, (lo, hi) in bands.items():
        e = dec.fits.get(k, {}).get("exponent", float("nan"))
        checks[k] = {"exponent": e, "band": [lo, hi], "pass": bool(lo <= e <= hi)}
    summary = {"aborted": dec.aborted, "message": dec.message, "fits": dec.fits,
               "window": list(dec.window), "sup_alpha": dec.sup_alpha,
               "alpha_final": float(dec.alpha[-1]) if len(dec.t) else None,
               "alpha_mass_final": float(dec.alpha_mass[-1]) if len(dec.t) else None,
               "mass_drift": dec.mass_drift, "bands": checks,
               "energy": {"k": en.k, "eta3": en.eta3, "C": en.C, "violations": en.violations,
                          "ratio_min": en.ratio_min, "ratio_max": en.ratio_max,
                          "band": list(en.band)},
               "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}}
    write_json(run.path("simulate.json"), summary)
    if dec.aborted:
        print(dec.message, file=sys.stderr)
        return EXIT_DOMAIN
    ok = all(c["pass"] for c in checks.values()) and en.violations == 0
    return EXIT_OK if ok else EXIT_DOMAIN


def main(argv=None):
    ap = argparse.ArgumentParser(prog="radshock", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("verify", "profile", "evans", "simulate", "all"))
    ap.add_argument("-c", "--config", help="INI config file")
    ap.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    ap.add_argument("--preset")
    ap.add_argument("--eps", type=float)
    ap.add_argument("--out")
    ap.add_argument("--refine", action="store_true", help="profile: halve the step and compare")
    ap.add_argument("--budget", type=int, help="evans: sample budget per contour piece")
    ap.add_argument("-R", type=float, dest="R", help="evans: outer contour radius")
    ap.add_argument("-r", type=float, dest="r", help="evans: inner contour radius")
    args = ap.parse_args(argv)
    over = list(args.set)
    if args.preset:
        over.append(f"model.preset={args.preset}")
    if args.eps is not None:
        over.append(f"model.eps={args.eps!r}")
    if args.out:
        over.append(f"output.dir={args.out}")
    for k in ("R", "r"):
        if getattr(args, k) is not None:
            over.append(f"evans.{k}={getattr(args, k)!r}")
    if args.budget is not None:
        over.append(f"evans.budget={args.budget}")
    try:
        cp = load_config(args.config, over)
        run = Run(cp, cp["output"]["dir"])
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    try:
        if args.command == "verify":
            return cmd_verify(run)
        if args.command == "profile":
            return cmd_profile(run, args.refine)
        if args.command == "evans":
            return cmd_evans(run)
        if args.command == "simulate":
            return cmd_simulate(run)
        codes = [cmd_verify(run)]
        if codes[0] != EXIT_OK:
            return codes[0]
        codes += [cmd_profile(run, args.refine), cmd_evans(run), cmd_simulate(run)]
        if EXIT_ERROR in codes:
            return EXIT_ERROR
        return max(codes)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:  # noqa: BLE001
        from .model import ModelError
        if isinstance(e, ModelError):
            print(f"assumption failure: {e}", file=sys.stderr)
            return EXIT_DOMAIN
        traceback.print_exc()
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

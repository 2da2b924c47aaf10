"""INI experiment configuration: schema, defaults and validation.

Every key is declared in :data:`SCHEMA`; unknown sections or keys are
rejected before any computation starts.
"""
import configparser

from .exceptions import ConfigError

MODES = ("synth-mcuos", "synth-rmcuos", "mckuos", "rmckuos", "denoise", "cluster", "bounds-check")
METHODS = ("micusal", "amicusal", "rmicusal", "mckusal", "rmckusal")

REQUIRED = object()


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _list(conv):
    def parse(v):
        items = [x.strip() for x in str(v).split(",") if x.strip()]
        if not items:
            raise ValueError("empty list")
        return [conv(x) for x in items]
    parse.__name__ = f"list of {conv.__name__}"
    return parse


# section -> key -> (parser, default, help)
SCHEMA = {
    "experiment": {
        "mode": (str, REQUIRED, "one of " + ", ".join(MODES)),
        "seed": (int, 0, "base seed; trial t uses the seed sequence (seed, t)"),
        "trials": (int, 1, "number of independent trials"),
        "run_id": (str, "run", "identifier copied into every CSV row"),
        "out": (str, "results.csv", "output CSV path (overridden by --out)"),
    },
    "data": {
        "source": (str, "synthetic", "synthetic or csv"),
        "m": (int, 180, "ambient dimension (synthetic)"),
        "s": (int, 13, "subspace dimension (synthetic)"),
        "L": (int, 5, "number of subspaces (synthetic)"),
        "t_s": (float, 0.04, "subspace spread (synthetic)"),
        "cluster_sizes": (_list(int), [150, 100, 150, 100, 150], "points per subspace (synthetic)"),
        "sigma_tr_sq": (float, 0.1, "training noise variance (synthetic)"),
        "sigma_te_sq": (_list(float), [0.1], "test noise variances"),
        "n_test": (int, 0, "test points per subspace (synthetic); 0 disables denoising"),
        "missing_frac": (_list(float), [0.0], "fractions of missing entries for missing-data methods"),
        "path": (str, "", "training CSV (csv source)"),
        "labels_path": (str, "", "optional label file, one integer per line"),
        "test_path": (str, "", "optional clean test CSV"),
        "transpose": (_bool, False, "signals are CSV columns instead of rows"),
        "normalize": (_bool, True, "scale signals to unit norm (csv source)"),
    },
    "method": {
        "methods": (_list(str), None, "learners to run; default depends on mode"),
        "L": (int, None, "number of subspaces; defaults to [data] L"),
        "s": (int, None, "subspace dimension; defaults to [data] s"),
        "lambda": (_list(float), [2.0], "representation weight(s)"),
        "restarts": (int, 1, "random restarts; the smallest objective wins"),
        "max_outer_iters": (int, 100, "outer iteration cap"),
        "rel_tol": (float, 1e-6, "relative objective tolerance"),
        "eta": (float, 0.1, "base geodesic step size (missing data)"),
        "inner_iters": (int, 100, "descent sweeps per subspace (missing data)"),
        "L_max": (int, 8, "upper bound on the number of subspaces (adaptive)"),
        "s_max": (int, 20, "upper bound on the subspace dimension (adaptive)"),
        "k1": (int, 6, "smallest neighbourhood size for dimension estimation"),
        "k2": (int, 10, "largest neighbourhood size for dimension estimation"),
        "eps_min": (float, 0.1, "merging threshold on normalized distance (adaptive)"),
        "kernel": (str, "gaussian", "gaussian or polynomial"),
        "c": (float, 4.0, "kernel parameter c"),
        "d": (int, 3, "polynomial degree"),
        "delta_min": (float, 1e-6, "eigenvalue floor for Gram repair"),
        "inner_max_sweeps": (int, 20, "update sweeps per assignment (kernel)"),
    },
    "bounds": {
        "m": (int, 100, "signal dimension"),
        "n_obs": (_list(int), [25, 50], "observed entries per pair"),
        "delta": (_list(float), [0.05, 0.1], "failure probability parameter(s)"),
        "samples": (int, 10000, "Monte Carlo pairs per setting"),
        "gaussian_c": (float, 4.0, "gaussian kernel parameter"),
        "poly_c": (float, 1.0, "polynomial kernel offset"),
        "poly_d": (int, 3, "polynomial degree (odd)"),
    },
}

DEFAULT_METHODS = {
    "synth-mcuos": ["micusal"],
    "synth-rmcuos": ["rmicusal"],
    "mckuos": ["mckusal"],
    "rmckuos": ["rmckusal"],
    "denoise": ["mckusal"],
    "cluster": ["mckusal"],
    "bounds-check": [],
}


def describe():
    """Human-readable listing of every key and default, for ``--help``."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, (_, default, text) in keys.items():
            if default is REQUIRED:
                dv = "required"
            elif isinstance(default, list):
                dv = ",".join(map(str, default))
            else:
                dv = default
            lines.append(f"  {k} = {dv}  ; {text}")
    return "\n".join(lines)


def load_config(path, require_mode=True):
    """Parse and validate an INI file into a nested dict of typed values."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {str(exc).splitlines()[0]}") from None
    raw = {sec: dict(parser.items(sec)) for sec in parser.sections()}
    return resolve(raw, require_mode)


def resolve(raw, require_mode=True):
    """Apply the schema to a ``{section: {key: str}}`` mapping."""
    for sec in raw:
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in raw[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key '{key}' in section [{sec}]")
    cfg = {}
    for sec, keys in SCHEMA.items():
        cfg[sec] = {}
        for key, (conv, default, _) in keys.items():
            if key in raw.get(sec, {}):
                try:
                    cfg[sec][key] = conv(raw[sec][key])
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad value for [{sec}] {key}: {exc}") from None
            elif default is REQUIRED:
                if sec == "experiment" and key == "mode" and not require_mode:
                    cfg[sec][key] = None
                    continue
                raise ConfigError(f"missing required key '{key}' in section [{sec}]")
            else:
                cfg[sec][key] = list(default) if isinstance(default, list) else default
    validate(cfg)
    return cfg


def validate(cfg):
    ex, d, m, b = cfg["experiment"], cfg["data"], cfg["method"], cfg["bounds"]
    if ex["mode"] is not None and ex["mode"] not in MODES:
        raise ConfigError(f"[experiment] mode must be one of {', '.join(MODES)}")
    if ex["trials"] < 1:
        raise ConfigError("[experiment] trials must be at least 1")
    if d["source"] not in ("synthetic", "csv"):
        raise ConfigError("[data] source must be 'synthetic' or 'csv'")
    if d["source"] == "csv" and not d["path"] and ex["mode"] != "bounds-check":
        raise ConfigError("[data] path is required when source = csv")
    if d["source"] == "synthetic":
        if len(d["cluster_sizes"]) != d["L"]:
            raise ConfigError("[data] cluster_sizes needs one entry per subspace")
        if not 0 < d["s"] < d["m"]:
            raise ConfigError("[data] needs 0 < s < m")
    if ex["mode"] in ("synth-mcuos", "synth-rmcuos") and d["source"] != "synthetic":
        raise ConfigError(f"mode {ex['mode']} needs [data] source = synthetic")
    if any(not 0 <= f < 1 for f in d["missing_frac"]):
        raise ConfigError("[data] missing_frac values must lie in [0, 1)")
    if any(v < 0 for v in d["sigma_te_sq"]) or d["sigma_tr_sq"] < 0:
        raise ConfigError("[data] noise variances must be nonnegative")
    if m["methods"] is None:
        m["methods"] = list(DEFAULT_METHODS.get(ex["mode"], []))
    for meth in m["methods"]:
        if meth not in METHODS:
            raise ConfigError(f"[method] unknown method '{meth}'")
    if m["L"] is None:
        m["L"] = d["L"]
    if m["s"] is None:
        m["s"] = d["s"]
    if m["L"] < 1 or m["s"] < 1:
        raise ConfigError("[method] L and s must be positive")
    if any(v <= 0 for v in m["lambda"]):
        raise ConfigError("[method] lambda values must be positive")
    if m["eta"] <= 0:
        raise ConfigError("[method] eta must be positive")
    if m["restarts"] < 1 or m["max_outer_iters"] < 1 or m["inner_iters"] < 1:
        raise ConfigError("[method] restarts and iteration counts must be positive")
    if not (3 <= m["k1"] <= m["k2"]):
        raise ConfigError("[method] needs 3 <= k1 <= k2")
    if not 0 <= m["eps_min"] < 1:
        raise ConfigError("[method] eps_min must lie in [0, 1)")
    if m["kernel"] not in ("gaussian", "polynomial"):
        raise ConfigError("[method] kernel must be 'gaussian' or 'polynomial'")
    if m["kernel"] == "gaussian" and m["c"] <= 0:
        raise ConfigError("[method] gaussian kernel needs c > 0")
    if m["kernel"] == "polynomial" and (m["c"] < 0 or m["d"] < 1):
        raise ConfigError("[method] polynomial kernel needs c >= 0 and d >= 1")
    if b["poly_d"] % 2 == 0:
        raise ConfigError("[bounds] poly_d must be odd")
    if any(not 0 < v < 1 for v in b["delta"]):
        raise ConfigError("[bounds] delta values must lie in (0, 1)")
    if b["samples"] < 1 or any(n < 1 for n in b["n_obs"]):
        raise ConfigError("[bounds] samples and n_obs must be positive")
    return cfg


def config_lines(cfg):
    """Resolved configuration as ``section.key = value`` lines."""
    out = []
    for sec, keys in cfg.items():
        for k, v in keys.items():
            if isinstance(v, list):
                v = ",".join(map(str, v))
            out.append(f"{sec}.{k} = {v}")
    return out

"""Command-line front end emitting figure-ready CSV/JSON datasets.

Subcommands::

    pcopo threshold --config cfg.json            thresholds of the four presets
    pcopo fig1      --config cfg.json            intensity vs pump and vs wavenumber
    pcopo fig2      --config cfg.json            quadrature variance vs angle
    pcopo fig3      --config cfg.json            EPR / inseparability angle maps
    pcopo simulate  --config cfg.json            raw campaign, accumulator dump
    pcopo calibrate --config cfg.json            vacuum shot-noise record

Any config key can be overridden with dotted-path flags, e.g. ``--pump.E=0.9``
or ``--campaign.n_trajectories=16``. Outputs land in a run directory named by
the configuration hash and the master seed. Exit codes: 0 success, 2 config
error, 3 numerical failure, 4 insufficient statistics.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import IntegrationError, IntegratorSettings
from .ensemble import CampaignAborted, CampaignSpec, run_campaign
from .linear import (NotHurwitzError, ThresholdError, find_threshold,
                     intensity_spectrum, pump_steady_state,
                     stationary_covariance, write_threshold_table)
from .model import (ConfigError, DetuningProfile, PRESET_NAMES, ValidityError,
                    config_hash, critical_wavenumber, load_config, make_preset)
from .quantum import (InsufficientStatistics, angle_scan, best_phi,
                      calibrate_shot_noise, default_phi_grid,
                      default_theta_grid, epr_product, inseparability,
                      quad_variance_equal_time, quad_variance_spectral,
                      spectral_moments)

# ---------------------------------------------------------------------------
# datasets


@dataclass
class FigureDataset:
    """Tabular dataset with a fixed column schema and full provenance."""

    identifier: str
    columns: list
    rows: list
    provenance: dict

    def to_json(self) -> str:
        return json.dumps({"identifier": self.identifier, "columns": self.columns,
                           "rows": self.rows, "provenance": self.provenance},
                          sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FigureDataset":
        d = json.loads(text)
        return cls(identifier=d["identifier"], columns=d["columns"],
                   rows=d["rows"], provenance=d["provenance"])

    def write(self, directory: str) -> None:
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, f"{self.identifier}.json"), "w") as fh:
            fh.write(self.to_json())
        import csv

        with open(os.path.join(directory, f"{self.identifier}.csv"), "w",
                  newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow(row)


# ---------------------------------------------------------------------------
# configuration plumbing


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_overrides(data: dict, overrides) -> dict:
    for item in overrides:
        if not item.startswith("--") or "=" not in item:
            raise ConfigError(f"override must look like --path.key=value, got {item!r}")
        path, raw = item[2:].split("=", 1)
        node = data
        keys = path.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} collides with a scalar")
        node[keys[-1]] = _parse_value(raw)
    return data


DEFAULT_CAMPAIGN = {
    "n_trajectories": 16,
    "burn_in": 50.0,
    "duration": 200.0,
    "stride": 10,
    "master_seed": 12345,
    "workers": 1,
    "dt": 0.025,
    "calibration_seed": None,       # defaults to master_seed + 1000
    "calibration_trajectories": 32,
    "calibration_duration": 200.0,
    "theta_points": 64,
    "phi_points": 32,
}


def _load(args, overrides) -> tuple[dict, "object"]:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    data = _apply_overrides(data, overrides)
    campaign = dict(DEFAULT_CAMPAIGN)
    campaign.update(data.pop("campaign", {}))
    checked = load_config(data)
    return campaign, checked


def _run_dir(base: str, checked, seed) -> str:
    path = os.path.join(base, f"{checked.config_hash}-{seed}")
    os.makedirs(path, exist_ok=True)
    return path


def _settings(campaign: dict) -> IntegratorSettings:
    return IntegratorSettings(dt=float(campaign["dt"]))


def _provenance(checked, campaign: dict, extra=None) -> dict:
    p = {"config_hash": checked.config_hash, "preset": checked.preset,
         "master_seed": campaign["master_seed"], "dt": campaign["dt"],
         "n_trajectories": campaign["n_trajectories"],
         "burn_in": campaign["burn_in"], "duration": campaign["duration"],
         "stride": campaign["stride"]}
    if extra:
        p.update(extra)
    return p


def _preset_list(campaign: dict):
    names = campaign.get("presets", list(PRESET_NAMES))
    for n in names:
        if n not in PRESET_NAMES:
            raise ConfigError(f"unknown preset {n!r}")
    return names


# ---------------------------------------------------------------------------
# subcommands


def _preset_variant(checked, name: str, amplitude: float = 0.5):
    """The four modulation placements built around the configured detunings."""
    kpc = 2.0 * critical_wavenumber(checked.params.delta1.mean)
    m0 = amplitude if name in ("pc-pump", "pc-both") else 0.0
    m1 = amplitude if name in ("pc-signal", "pc-both") else 0.0
    return replace(checked.params,
                   delta0=DetuningProfile(checked.params.delta0.mean, m0,
                                          kpc if m0 else 0.0),
                   delta1=DetuningProfile(checked.params.delta1.mean, m1,
                                          kpc if m1 else 0.0))


def cmd_threshold(args, overrides) -> int:
    campaign, checked = _load(args, overrides)
    out = _run_dir(args.out, checked, campaign["master_seed"])
    rows = []
    for name in _preset_list(campaign):
        params = _preset_variant(checked, name)
        eth = find_threshold(params, checked.grid)
        rows.append((name, eth))
        print(f"{name:10s} E_th = {eth:.4f}")
    write_threshold_table(os.path.join(out, "thresholds.csv"), rows)
    ds = FigureDataset("thresholds", ["preset", "E_th"],
                       [[n, e] for n, e in rows],
                       _provenance(checked, campaign))
    ds.write(out)
    return 0


def _analytic_intensity_at(params, grid, k: float) -> float:
    steady = pump_steady_state(params, grid)
    base = k - np.floor(k / steady.k_pc) * steady.k_pc
    return stationary_covariance(base, steady, params, grid).intensity(k)


def cmd_fig1(args, overrides) -> int:
    campaign, checked = _load(args, overrides)
    out = _run_dir(args.out, checked, campaign["master_seed"])
    kc = critical_wavenumber(-1.0)
    fractions = campaign.get("pump_fractions", [0.5, 0.7, 0.9])
    simulate = bool(campaign.get("simulate", False))

    rows_a = []
    for name in _preset_list(campaign):
        params, grid = make_preset(name, grid=checked.grid)
        eth = find_threshold(params, grid)
        for f in fractions:
            E = f * eth
            analytic = _analytic_intensity_at(replace(params, pump_amplitude=E),
                                              grid, kc)
            sim, se = float("nan"), float("nan")
            if simulate:
                res = run_campaign(CampaignSpec(
                    preset=name, grid=grid, pump=E,
                    n_trajectories=campaign["n_trajectories"],
                    burn_in=campaign["burn_in"], duration=campaign["duration"],
                    stride=campaign["stride"], master_seed=campaign["master_seed"],
                    worker_count=campaign["workers"], settings=_settings(campaign),
                    initialization="vacuum", store_series=False))
                sim, se = res.intensity_at(kc, grid)
            rows_a.append([name, E, analytic, sim, se])
    ds_a = FigureDataset("fig1a",
                         ["preset", "E", "intensity_analytic", "intensity_sim", "stderr"],
                         rows_a, _provenance(checked, campaign,
                                             {"k": kc, "fractions": fractions}))
    ds_a.write(out)

    rows_b = []
    E = checked.params.pump_amplitude or 0.9
    for name in _preset_list(campaign):
        params, grid = make_preset(name, pump_amplitude=E, grid=checked.grid)
        spec = intensity_spectrum(params, grid)
        for k, inten in zip(grid.wavenumbers, spec):
            rows_b.append([name, float(k), float(inten)])
    ds_b = FigureDataset("fig1b", ["preset", "k", "intensity_analytic"], rows_b,
                         _provenance(checked, campaign, {"E": E}))
    ds_b.write(out)
    print(f"fig1 datasets written to {out}")
    return 0


def _campaign_result(name, grid, rel, campaign, init, duration=None):
    return run_campaign(CampaignSpec(
        preset=name, grid=grid, pump_relative=rel,
        n_trajectories=campaign["n_trajectories"], burn_in=campaign["burn_in"],
        duration=duration if duration is not None else campaign["duration"],
        stride=campaign["stride"], master_seed=campaign["master_seed"],
        worker_count=campaign["workers"], settings=_settings(campaign),
        initialization=init))


def _calibration(campaign, grid, checked):
    params, _ = make_preset("opo", grid=grid)
    seed = campaign["calibration_seed"]
    if seed is None:
        seed = campaign["master_seed"] + 1000
    kc = critical_wavenumber(-1.0)
    return calibrate_shot_noise(
        params, grid, _settings(campaign), int(seed),
        n_trajectories=campaign["calibration_trajectories"],
        duration=campaign["calibration_duration"],
        stride=campaign["stride"], store_modes=(kc, -kc))


def cmd_fig2(args, overrides) -> int:
    campaign, checked = _load(args, overrides)
    out = _run_dir(args.out, checked, campaign["master_seed"])
    thetas = default_theta_grid(int(campaign["theta_points"]))
    phis = default_phi_grid(int(campaign["phi_points"]))
    cal = _calibration(campaign, checked.grid, checked)
    rows = []
    prov_extra = {"branches": {"below": 0.95, "above": 1.02},
                  "shot_noise": 2.0, "lambda": 1.0, "squeezed_measure": {}}
    for name in _preset_list(campaign):
        for branch, rel, init, ordering in (
                ("below", 0.95, "vacuum", "equal-time"),
                ("above", 1.02, "pattern", "zero-frequency")):
            res = _campaign_result(name, checked.grid, rel, campaign, init)
            res.moments.calibration = cal
            phibar = best_phi(res.moments, thetas, phis, 1.0, ordering)
            scan = angle_scan(res.moments, thetas, np.array([phibar]),
                              "variance", 1.0, ordering=ordering)
            for i, th in enumerate(thetas):
                rows.append([name, branch, float(th), float(phibar),
                             float(scan.values[i, 0])])
            prov_extra["squeezed_measure"][f"{name}/{branch}"] = scan.squeezed_measure
    ds = FigureDataset("fig2", ["preset", "branch", "theta", "phi_bar", "variance"],
                       rows, _provenance(checked, campaign, prov_extra))
    ds.write(out)
    print(f"fig2 dataset written to {out}")
    return 0


def cmd_fig3(args, overrides) -> int:
    campaign, checked = _load(args, overrides)
    out = _run_dir(args.out, checked, campaign["master_seed"])
    thetas = default_theta_grid(int(campaign["theta_points"]))
    phis = default_phi_grid(int(campaign["phi_points"]))
    cal = _calibration(campaign, checked.grid, checked)
    names = campaign.get("presets", ["opo", "pc-pump"])
    rows = []
    extrema = {}
    for name in names:
        res = _campaign_result(name, checked.grid, 1.02, campaign, "pattern")
        res.moments.calibration = cal
        sm = spectral_moments(res.moments)
        for th in thetas:
            for ph in phis:
                e = epr_product(sm, float(th), float(ph), "zero-frequency")
                _, ratio = inseparability(sm, float(th), float(ph), 1.0,
                                          "zero-frequency")
                rows.append([name, float(th), float(ph), float(e), float(ratio)])
        vals = np.array([[r[3], r[4]] for r in rows if r[0] == name])
        extrema[name] = {"min_epr": float(vals[:, 0].min()),
                         "min_insep_ratio": float(vals[:, 1].min())}
    ds = FigureDataset("fig3",
                       ["preset", "theta0", "phi0", "epr_product", "insep_ratio"],
                       rows, _provenance(checked, campaign, {"extrema": extrema}))
    ds.write(out)
    print(f"fig3 dataset written to {out}")
    return 0


def cmd_simulate(args, overrides) -> int:
    campaign, checked = _load(args, overrides)
    out = _run_dir(args.out, checked, campaign["master_seed"])
    res = run_campaign(CampaignSpec(
        params=checked.params, grid=checked.grid,
        n_trajectories=campaign["n_trajectories"], burn_in=campaign["burn_in"],
        duration=campaign["duration"], stride=campaign["stride"],
        master_seed=campaign["master_seed"], worker_count=campaign["workers"],
        settings=_settings(campaign),
        initialization=campaign.get("initialization", "vacuum")))
    res.save_accumulators(os.path.join(out, "accumulators.json"))
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(res.manifest, fh, indent=2)
    print(f"campaign written to {out}")
    return 0


def cmd_calibrate(args, overrides) -> int:
    campaign, checked = _load(args, overrides)
    out = _run_dir(args.out, checked, campaign["master_seed"])
    cal = _calibration(campaign, checked.grid, checked)
    blob = {"manifest": cal.manifest,
            "wavenumbers": cal.wavenumbers.tolist(),
            "mode_intensity_q": cal.mode_intensity.tolist()}
    with open(os.path.join(out, "calibration.json"), "w") as fh:
        json.dump(blob, fh, indent=2)
    worst = float(np.max(np.abs(cal.mode_intensity - 1.0)))
    print(f"vacuum calibration written to {out} (worst deviation {worst:.3%})")
    return 0


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {"threshold": cmd_threshold, "fig1": cmd_fig1, "fig2": cmd_fig2,
            "fig3": cmd_fig3, "simulate": cmd_simulate, "calibrate": cmd_calibrate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcopo", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON configuration file")
        p.add_argument("--out", default="runs", help="output base directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, overrides = parser.parse_known_args(argv)
    try:
        return COMMANDS[args.command](args, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (IntegrationError, ValidityError, ThresholdError, NotHurwitzError,
            CampaignAborted, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except InsufficientStatistics as exc:
        print(f"insufficient statistics: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

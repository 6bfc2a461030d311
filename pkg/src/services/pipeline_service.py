"""
Pipeline Service orchestrating the robustness experiment.

Phases communicate only through files under ``<output>/<phase>/`` so any
phase can be rerun from cached inputs. ``run_pipeline`` sequences them and
``emit_report`` renders the clean-accuracy and robustness tables.
"""

import json
import time
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np

from config.settings import ExperimentConfig
from src.models.attack import AttackConfig, AttackResult
from src.models.dataset import DatasetBundle
from src.models.graph import SparseGraph
from src.models.report import (
    CellSummary,
    Provenance,
    ReportRow,
    RobustnessReport,
    SeedSweepSummary,
    Variant,
)
from src.services import (
    attack_service,
    dataset_service,
    gcn_service,
    manifold_service,
    prune_service,
    spectral_service,
)
from src.utils.errors import DatasetLoadError, PhaseError
from src.utils.logging import get_contextual_logger, get_logger, log_performance

logger = get_logger(__name__)

VARIANTS: Tuple[Variant, ...] = tuple(Variant)
CSV_HEADER = "variant,rho,clean,attacked,delta,saturated"


class ArtifactLayout:
    """Paths of every artifact under an output directory."""

    def __init__(self, output: str):
        self.root = Path(output)

    def phase_dir(self, phase: str) -> Path:
        return self.root / phase

    def model(self, variant: Variant) -> Path:
        return self.root / "train" / f"{Variant(variant).value}.gcn"

    def trace(self, variant: Variant) -> Path:
        return self.root / "train" / f"{Variant(variant).value}_trace.csv"

    @property
    def embeddings(self) -> Path:
        return self.root / "embed" / "embeddings.npy"

    @property
    def manifold(self) -> Path:
        return self.root / "knn" / "manifold.graph"

    @property
    def eigenpairs(self) -> Path:
        return self.root / "eigs" / "eigenpairs.npz"

    @property
    def diagnostics(self) -> Path:
        return self.root / "eigs" / "diagnostics.json"

    @property
    def scores(self) -> Path:
        return self.root / "score" / "scores.txt"

    @property
    def pruned_graph(self) -> Path:
        return self.root / "prune" / "pruned.graph"

    @property
    def removed(self) -> Path:
        return self.root / "prune" / "removed.txt"

    def attack(self, rho: float) -> Path:
        return self.root / "attack" / f"rho_{rho!r}.txt"

    @property
    def eval_dir(self) -> Path:
        return self.root / "eval"


def _require(path: Path, produced_by: str) -> Path:
    if not path.is_file():
        raise DatasetLoadError(f"missing artifact {path} (run the '{produced_by}' phase first)", str(path))
    return path


def _load_inputs(cfg: ExperimentConfig) -> Tuple[DatasetBundle, SparseGraph]:
    bundle = dataset_service.load_dataset(cfg.dataset, cfg.normalize_features)
    return bundle, dataset_service.graph_from_bundle(bundle)


def _victim_graph(cfg: ExperimentConfig, variant: Variant, original: SparseGraph) -> SparseGraph:
    if variant == Variant.ORIGINAL:
        return original
    return dataset_service.load_graph(_require(ArtifactLayout(cfg.output).pruned_graph, "prune"))


def _train_variant(cfg: ExperimentConfig, variant: Variant) -> float:
    layout = ArtifactLayout(cfg.output)
    bundle, graph = _load_inputs(cfg)
    graph = _victim_graph(cfg, variant, graph)
    report = gcn_service.train(bundle, graph, cfg.gcn)
    gcn_service.save_checkpoint(report.best_model, layout.model(variant))
    gcn_service.save_trace(report, layout.trace(variant))
    return report.best_test_accuracy


def phase_train(cfg: ExperimentConfig) -> float:
    """Train the GCN on the original graph; returns its best test accuracy."""
    return _train_variant(cfg, Variant.ORIGINAL)


def phase_embed(cfg: ExperimentConfig) -> np.ndarray:
    """First-layer embeddings of the original-graph model."""
    layout = ArtifactLayout(cfg.output)
    bundle, graph = _load_inputs(cfg)
    model = gcn_service.load_checkpoint(_require(layout.model(Variant.ORIGINAL), "train"), cfg.gcn)
    embeddings = gcn_service.embed(model, graph, bundle.features)
    layout.embeddings.parent.mkdir(parents=True, exist_ok=True)
    np.save(layout.embeddings, embeddings)
    return embeddings


def phase_knn(cfg: ExperimentConfig) -> SparseGraph:
    layout = ArtifactLayout(cfg.output)
    embeddings = np.load(_require(layout.embeddings, "embed"))
    manifold = manifold_service.build_knn_graph(embeddings, cfg.knn)
    dataset_service.save_graph(manifold, layout.manifold)
    return manifold


def phase_eigs(cfg: ExperimentConfig):
    """Generalized eigenpairs of (L_X, L_Y) for the original and manifold graphs."""
    layout = ArtifactLayout(cfg.output)
    _, graph = _load_inputs(cfg)
    manifold = dataset_service.load_graph(_require(layout.manifold, "knn"))
    embedding = spectral_service.compute_spectral_embedding(graph, manifold, cfg.spectral)
    spectral_service.save_embedding(embedding, layout.eigenpairs)
    spectral_service.save_diagnostics(embedding.diagnostics, layout.diagnostics)
    return embedding


def phase_score(cfg: ExperimentConfig):
    layout = ArtifactLayout(cfg.output)
    _, graph = _load_inputs(cfg)
    embedding = spectral_service.load_embedding(_require(layout.eigenpairs, "eigs"))
    table = spectral_service.spade_scores(embedding, graph)
    spectral_service.save_scores(table, layout.scores)
    return table


def phase_prune(cfg: ExperimentConfig) -> SparseGraph:
    layout = ArtifactLayout(cfg.output)
    _, graph = _load_inputs(cfg)
    table = spectral_service.load_scores(_require(layout.scores, "score"))
    pruned, removed = prune_service.prune_graph(graph, table, cfg.prune)
    dataset_service.save_graph(pruned, layout.pruned_graph)
    prune_service.save_removed_edges(removed, layout.removed)
    return pruned


def phase_retrain(cfg: ExperimentConfig) -> float:
    """Train a fresh GCN on the pruned graph with the same seed and hyperparameters."""
    return _train_variant(cfg, Variant.PRUNED)


def phase_attack(cfg: ExperimentConfig) -> List[AttackResult]:
    """
    Generate one adversarial edge set per rho from the original-graph model.

    The files written here are shared by both victims.
    """
    layout = ArtifactLayout(cfg.output)
    bundle, graph = _load_inputs(cfg)
    model = gcn_service.load_checkpoint(_require(layout.model(Variant.ORIGINAL), "train"), cfg.gcn)
    embeddings = np.load(_require(layout.embeddings, "embed"))
    _, correct = gcn_service.evaluate(model, graph, bundle, bundle.test_mask)

    results = []
    for rho in cfg.attack_rhos:
        attack_cfg = AttackConfig(rho=rho, reference_edge_count=graph.num_edges)
        result = attack_service.generate_attack(
            embeddings, bundle.labels, bundle.test_mask, correct, graph, attack_cfg
        )
        attack_service.save_attack(result, layout.attack(rho))
        results.append(result)
    return results


def compute_delta(attacked: float, clean: float) -> float:
    """Accuracy change under attack: attacked - clean."""
    return attacked - clean


def phase_eval(cfg: ExperimentConfig, timings_ms: Optional[Dict[str, float]] = None) -> RobustnessReport:
    """
    Evaluate both frozen models clean and under every stored attack, then emit reports.
    """
    layout = ArtifactLayout(cfg.output)
    bundle, graph = _load_inputs(cfg)
    attacks = [attack_service.load_attack(_require(layout.attack(rho), "attack")) for rho in cfg.attack_rhos]

    clean_accuracy: Dict[Variant, float] = {}
    rows: List[ReportRow] = []
    pruned_edge_count = None
    for variant in VARIANTS:
        victim = _victim_graph(cfg, variant, graph)
        if variant == Variant.PRUNED:
            pruned_edge_count = graph.num_edges - victim.num_edges
        model = gcn_service.load_checkpoint(_require(layout.model(variant), "train"), cfg.gcn)
        clean, _ = gcn_service.evaluate(model, victim, bundle, bundle.test_mask)
        clean_accuracy[variant] = clean
        for rho, result in zip(cfg.attack_rhos, attacks):
            attacked_graph = attack_service.apply_attack(victim, result)
            attacked, _ = gcn_service.evaluate(model, attacked_graph, bundle, bundle.test_mask)
            rows.append(ReportRow(
                variant=variant,
                rho=rho,
                clean=clean,
                attacked=attacked,
                delta=compute_delta(attacked, clean),
                saturated=result.saturated,
                added_edges=attacked_graph.num_edges - victim.num_edges,
                skipped_edges=result.count - (attacked_graph.num_edges - victim.num_edges),
            ))

    saturated = [result.count for result in attacks if result.saturated]
    report = RobustnessReport(
        clean_accuracy=clean_accuracy,
        rows=rows,
        provenance=Provenance(
            seed=cfg.seed,
            config_hash=cfg.config_digest(),
            timings_ms=dict(timings_ms or {}),
            saturation_edge_count=saturated[0] if saturated else None,
            reference_edge_count=graph.num_edges,
            removed_edge_count=pruned_edge_count,
        ),
    )
    emit_report(report, layout.eval_dir, prune_fraction=cfg.prune_fraction)
    return report


def _fraction_text(value: float) -> str:
    return f"{100.0 * value:.1f}"


def render_csv(report: RobustnessReport) -> str:
    """Rows at full precision; byte-identical for identical reports."""
    lines = [CSV_HEADER]
    for row in report.rows:
        lines.append(
            f"{row.variant.value},{row.rho!r},{row.clean!r},{row.attacked!r},{row.delta!r},"
            f"{str(row.saturated).lower()}"
        )
    return "\n".join(lines) + "\n"


def render_markdown(report: RobustnessReport) -> str:
    """Robustness table with one row per rho and a column group per variant."""
    lines = [
        "| Budget rho (%) | Original clean | Original attacked | Original delta "
        "| Pruned clean | Pruned attacked | Pruned delta |",
        "|---|---|---|---|---|---|---|",
    ]
    pruned_rows = {row.rho: row for row in report.rows_for(Variant.PRUNED)}
    for row in report.rows_for(Variant.ORIGINAL):
        cells = [_fraction_text(row.rho) + ("*" if row.saturated else "")]
        for variant_row in (row, pruned_rows.get(row.rho)):
            if variant_row is None:
                cells.extend(["-", "-", "-"])
                continue
            cells.extend([
                _fraction_text(variant_row.clean),
                _fraction_text(variant_row.attacked),
                f"{100.0 * variant_row.delta:+.1f}",
            ])
        lines.append("| " + " | ".join(cells) + " |")
    if any(row.saturated for row in report.rows):
        lines.append("")
        lines.append(
            f"\\* attack saturated at {report.provenance.saturation_edge_count} edges "
            f"of {report.provenance.reference_edge_count}"
        )
    return "\n".join(lines) + "\n"


def render_clean_markdown(report: RobustnessReport, prune_fraction: Optional[float] = None) -> str:
    """Clean test accuracy per graph variant."""
    pruned_label = "Spade-pruned graph"
    if prune_fraction is not None:
        pruned_label += f" ({_fraction_text(prune_fraction)}% edges removed)"
    labels = {Variant.ORIGINAL: "Original graph", Variant.PRUNED: pruned_label}
    lines = ["| Graph | Test accuracy (%) |", "|---|---|"]
    for variant in VARIANTS:
        if variant in report.clean_accuracy:
            lines.append(f"| {labels[variant]} | {_fraction_text(report.clean_accuracy[variant])} |")
    return "\n".join(lines) + "\n"


def write_report_json(report: RobustnessReport, directory: Path) -> Path:
    path = Path(directory) / "report.json"
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def emit_report(
    report: RobustnessReport,
    directory: Path,
    formats: Iterable[str] = ("csv", "markdown"),
    prune_fraction: Optional[float] = None,
) -> List[Path]:
    """
    Write the report under ``directory``.

    ``csv`` gives report.csv; ``markdown`` gives report.md and clean.md.
    report.json with provenance and timings is always written.

    Returns:
        Paths written
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for fmt in formats:
            if fmt == "csv":
                path = directory / "report.csv"
                with open(path, "w", encoding="utf-8", newline="\n") as f:
                    f.write(render_csv(report))
                written.append(path)
            elif fmt == "markdown":
                for name, text in (
                    ("report.md", render_markdown(report)),
                    ("clean.md", render_clean_markdown(report, prune_fraction)),
                ):
                    path = directory / name
                    with open(path, "w", encoding="utf-8", newline="\n") as f:
                        f.write(text)
                    written.append(path)
            else:
                raise ValueError(f"unknown report format: {fmt}")
        written.append(write_report_json(report, directory))
    except OSError as e:
        logger.error(f"Failed to write report to {directory}: {e}")
        raise
    return written


PhaseFunction = Callable[[ExperimentConfig], object]

PHASES: Dict[str, PhaseFunction] = {
    "train": phase_train,
    "embed": phase_embed,
    "knn": phase_knn,
    "eigs": phase_eigs,
    "score": phase_score,
    "prune": phase_prune,
    "retrain": phase_retrain,
    "attack": phase_attack,
}


def run_phase(name: str, cfg: ExperimentConfig, timings_ms: Optional[Dict[str, float]] = None):
    """
    Run one named phase, timing it and wrapping failures in PhaseError.
    """
    phase_logger = get_contextual_logger(__name__, phase=name, seed=cfg.seed)
    phase_logger.info(f"Phase '{name}' started")
    start_time = time.time()
    try:
        if name == "eval":
            result = phase_eval(cfg, timings_ms)
        else:
            result = PHASES[name](cfg)
    except Exception as e:
        phase_logger.error(f"Phase '{name}' failed: {e}", extra={"error_type": type(e).__name__})
        raise PhaseError(name, e) from e
    duration_ms = (time.time() - start_time) * 1000
    if timings_ms is not None:
        timings_ms[name] = duration_ms
    log_performance(f"phase_{name}", duration_ms, logger)
    return result


def run_pipeline(cfg: ExperimentConfig) -> RobustnessReport:
    """
    Run every phase in order and return the robustness report.

    Raises:
        PhaseError: Naming the first phase that failed
    """
    logger.info("Pipeline started", extra={
        "seed": cfg.seed,
        "dataset": cfg.dataset,
        "output": cfg.output,
        "config_hash": cfg.config_digest(),
    })
    Path(cfg.output).mkdir(parents=True, exist_ok=True)
    (Path(cfg.output) / "config.conf").write_text(cfg.as_flat_text(), encoding="utf-8")

    timings: Dict[str, float] = {}
    for name in PHASES:
        run_phase(name, cfg, timings)
    report = run_phase("eval", cfg, timings)
    report.provenance.timings_ms = dict(timings)
    write_report_json(report, ArtifactLayout(cfg.output).eval_dir)

    logger.info("Pipeline finished", extra={
        "seed": cfg.seed,
        "clean_original": report.clean_accuracy.get(Variant.ORIGINAL),
        "clean_pruned": report.clean_accuracy.get(Variant.PRUNED),
        "total_ms": sum(timings.values()),
    })
    return report


def _summarize(values: List[float]) -> CellSummary:
    return CellSummary(mean=float(np.mean(values)), low=float(min(values)), high=float(max(values)))


def summarize_reports(seeds: List[int], reports: List[RobustnessReport]) -> SeedSweepSummary:
    """Mean and range of every report cell across seeds."""
    clean = {
        variant.value: _summarize([r.clean_accuracy[variant] for r in reports])
        for variant in VARIANTS
        if all(variant in r.clean_accuracy for r in reports)
    }
    attacked: Dict[str, Dict[str, CellSummary]] = {}
    delta: Dict[str, Dict[str, CellSummary]] = {}
    for variant in VARIANTS:
        by_rho: Dict[str, List[ReportRow]] = {}
        for report in reports:
            for row in report.rows_for(variant):
                by_rho.setdefault(repr(row.rho), []).append(row)
        attacked[variant.value] = {rho: _summarize([row.attacked for row in rows]) for rho, rows in by_rho.items()}
        delta[variant.value] = {rho: _summarize([row.delta for row in rows]) for rho, rows in by_rho.items()}
    return SeedSweepSummary(seeds=seeds, clean_accuracy=clean, attacked=attacked, delta=delta)


def render_sweep_markdown(summary: SeedSweepSummary) -> str:
    def cell(summary_cell: CellSummary) -> str:
        return (
            f"{_fraction_text(summary_cell.mean)} "
            f"[{_fraction_text(summary_cell.low)}, {_fraction_text(summary_cell.high)}]"
        )

    lines = [f"Seeds: {', '.join(str(seed) for seed in summary.seeds)}", ""]
    lines += ["| Graph | Clean accuracy (%) mean [min, max] |", "|---|---|"]
    for variant, summary_cell in summary.clean_accuracy.items():
        lines.append(f"| {variant} | {cell(summary_cell)} |")
    lines += ["", "| Variant | Budget rho | Attacked (%) | Delta (points) |", "|---|---|---|---|"]
    for variant, cells in summary.attacked.items():
        for rho, summary_cell in cells.items():
            d = summary.delta[variant][rho]
            lines.append(
                f"| {variant} | {rho} | {cell(summary_cell)} "
                f"| {100.0 * d.mean:+.1f} [{100.0 * d.low:+.1f}, {100.0 * d.high:+.1f}] |"
            )
    return "\n".join(lines) + "\n"


def run_seed_sweep(cfg: ExperimentConfig, n: Optional[int] = None) -> SeedSweepSummary:
    """
    Run the pipeline for seeds seed..seed+n-1 in ``<output>/seed_<s>/``.

    Writes sweep.json and sweep.md under the output directory.
    """
    n = n or cfg.seeds
    seeds = list(range(cfg.seed, cfg.seed + n))
    reports = [
        run_pipeline(cfg.with_seed(seed, output=str(Path(cfg.output) / f"seed_{seed}")))
        for seed in seeds
    ]
    summary = summarize_reports(seeds, reports)
    root = Path(cfg.output)
    root.mkdir(parents=True, exist_ok=True)
    (root / "sweep.json").write_text(json.dumps(summary.model_dump(), indent=2) + "\n", encoding="utf-8")
    (root / "sweep.md").write_text(render_sweep_markdown(summary), encoding="utf-8")
    logger.info("Seed sweep finished", extra={"seeds": seeds})
    return summary

"""CLI del pipeline: synth, label, train, generate, eval, experiment, overfit y gradcheck.

Códigos de salida: 0 ok, 2 error de E/S, 3 configuración o datos inválidos,
4 fallo numérico.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import structlog

from src.application.experiments import VARIANTS
from src.cli import deps
from src.domain.exceptions import DomainError, NumericalError
from src.infrastructure.config import RunConfig, load_run_config, write_run_config
from src.infrastructure.corpus_store import write_json
from src.nn.gradcheck import TOLERANCE, run_gradcheck_suite

logger = structlog.get_logger()

EXIT_OK = 0
EXIT_IO = 2
EXIT_INVALID = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
	parser = argparse.ArgumentParser(prog="dgn", description="Generación de recetas por fases (DGN)")
	parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING... (por defecto DGN_LOG_LEVEL)")
	sub = parser.add_subparsers(dest="command", required=True)

	synth = sub.add_parser("synth", help="genera un corpus sintético con estructura plantada")
	synth.add_argument("--out", required=True)
	synth.add_argument("--n", type=int, default=None)
	synth.add_argument("--seed", type=int, default=None)
	synth.add_argument("--phase-types", type=int, default=None)
	synth.add_argument("--image-mode", choices=("feat", "grid"), default=None)
	synth.add_argument("--config", default=None)

	label = sub.add_parser("label", help="asigna pseudo etiquetas de fase con k-means")
	label.add_argument("--corpus", required=True)
	label.add_argument("--out", default=None, help="corpus etiquetado (por defecto <corpus>.labeled.jsonl)")
	label.add_argument("--k", type=int, default=None)
	label.add_argument("--seed", type=int, default=None)
	label.add_argument("--lexicon", default=None)
	label.add_argument("--embeddings", default=None)
	label.add_argument("--config", default=None)

	train = sub.add_parser("train", help="entrena DGN o la línea base")
	train.add_argument("--corpus", required=True)
	train.add_argument("--out", required=True)
	train.add_argument("--config", default=None)
	train.add_argument("--seed", type=int, default=None)
	train.add_argument("--epochs", type=int, default=None)
	train.add_argument("--model-kind", choices=("dgn", "baseline"), default=None)
	train.add_argument("--fusion", choices=("cat", "attn"), default=None)
	train.add_argument("--n-generators", type=int, default=None)
	train.add_argument("--inputs", choices=("both", "image", "ingredients"), default=None)

	generate = sub.add_parser("generate", help="genera recetas desde un checkpoint")
	generate.add_argument("--ckpt", required=True)
	generate.add_argument("--input", required=True)
	generate.add_argument("--out", required=True)
	generate.add_argument("--order", choices=("predicted", "random"), default="predicted")
	generate.add_argument("--seed", type=int, default=0)

	evaluate = sub.add_parser("eval", help="perplejidad, BLEU, ROUGE-L y estadísticas")
	evaluate.add_argument("--ckpt", required=True)
	evaluate.add_argument("--corpus", required=True)
	evaluate.add_argument("--out", default=None)

	experiment = sub.add_parser("experiment", help="compara DGN (attn, cat, N=1) con la línea base a igual presupuesto")
	experiment.add_argument("--corpus", required=True)
	experiment.add_argument("--out", required=True)
	experiment.add_argument("--config", default=None)
	experiment.add_argument("--seed", type=int, default=None)
	experiment.add_argument("--epochs", type=int, default=None)
	experiment.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))

	overfit = sub.add_parser("overfit", help="comprueba que DGN memoriza un subconjunto pequeño")
	overfit.add_argument("--corpus", required=True)
	overfit.add_argument("--config", default=None)
	overfit.add_argument("--seed", type=int, default=None)
	overfit.add_argument("--lr", type=float, default=None)
	overfit.add_argument("--recipes", type=int, default=16)
	overfit.add_argument("--max-epochs", type=int, default=200)
	overfit.add_argument("--threshold", type=float, default=1.3)

	gradcheck = sub.add_parser("gradcheck", help="compara gradientes contra diferencias finitas")
	gradcheck.add_argument("--seed", type=int, default=0)
	return parser


def _require_file(path: str) -> None:
	if not Path(path).is_file():
		raise FileNotFoundError(2, "no existe el archivo requerido", path)


_STAGE_SEEDS = {
	"synth": "synth.seed",
	"label": "label.seed",
	"train": "train.seed",
	"experiment": "train.seed",
	"overfit": "train.seed",
}


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
	mapping = {
		"log_level": "log_level",
		"seed": "seed",
		"n": "synth.n_recipes",
		"phase_types": "synth.n_phase_types",
		"image_mode": "synth.image_mode",
		"k": "label.k",
		"lexicon": "label.lexicon_path",
		"embeddings": "label.embeddings_path",
		"epochs": "train.epochs",
		"lr": "train.lr",
		"model_kind": "model.model_kind",
		"fusion": "model.fusion",
		"n_generators": "model.n_generators",
		"inputs": "model.inputs",
	}
	values = {key: getattr(args, attr) for attr, key in mapping.items() if hasattr(args, attr)}
	seed = values.get("seed")
	if seed is not None and args.command in _STAGE_SEEDS:
		values[_STAGE_SEEDS[args.command]] = seed
	return values


def _resolve(args: argparse.Namespace) -> RunConfig:
	config_path = getattr(args, "config", None)
	if config_path:
		_require_file(config_path)
	return load_run_config(config_path, _overrides(args))


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
	corpus = deps.get_synth_use_case().execute(config=config.synth, out_path=args.out)
	write_run_config(config, str(Path(args.out).parent))
	return {"out": args.out, "recipes": len(corpus.records)}


def cmd_label(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
	_require_file(args.corpus)
	source = Path(args.corpus)
	out = Path(args.out) if args.out else source.with_name(f"{source.stem}.labeled.jsonl")
	result = deps.get_labeling_use_case(config).execute(
		corpus_path=str(source),
		out_path=str(out),
		centroids_path=str(out.with_name(f"{out.stem}.centroids.json")),
		labels_path=str(out.with_name(f"{out.stem}.labels.jsonl")),
	)
	write_run_config(config, str(out.parent))
	return {"out": str(out), "k": result.model.k, "purity": result.purity, "template_match": result.template_match}


def cmd_train(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
	_require_file(args.corpus)
	write_run_config(config, args.out)
	result = deps.get_training_use_case(config).execute(corpus_path=args.corpus, out_dir=args.out)
	return {
		"checkpoint": str(result.model_path),
		"best": str(result.best_path) if result.best_path else None,
		"best_val_ppl": result.best_val_ppl,
		"epochs": len(result.history),
	}


def cmd_generate(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
	_require_file(args.ckpt)
	_require_file(args.input)
	use_case, model_config = deps.get_generation_use_case(
		args.ckpt, threads=config.threads, order=args.order, seed=args.seed
	)
	store = deps.get_store()
	generated = asyncio.run(use_case.execute_many(store.load(args.input)))
	store.save_generations(args.out, generated)
	write_run_config(model_config, str(Path(args.out).parent))
	return {"out": args.out, "recipes": len(generated)}


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
	_require_file(args.ckpt)
	_require_file(args.corpus)
	use_case, model_config = deps.get_evaluation_use_case(args.ckpt, threads=config.threads)
	report = asyncio.run(use_case.execute(deps.get_store().load(args.corpus)))
	if args.out:
		write_json(args.out, report.to_dict())
		write_run_config(model_config, str(Path(args.out).parent))
	return report.to_dict()


def cmd_experiment(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
	_require_file(args.corpus)
	write_run_config(config, args.out)
	use_case = deps.get_experiment_use_case(config, variants=args.variants)
	report = asyncio.run(use_case.execute(corpus_path=args.corpus, out_dir=args.out))
	return report.to_dict()


def cmd_overfit(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
	_require_file(args.corpus)
	use_case = deps.get_overfit_use_case(
		config, n_recipes=args.recipes, max_epochs=args.max_epochs, threshold=args.threshold
	)
	result = use_case.execute(corpus_path=args.corpus)
	if not result.passed:
		print(json.dumps(result.to_dict(), indent=2))
		raise NumericalError(
			f"overfit: perplejidad {result.final_perplexity:.3f} tras {result.epochs} épocas (umbral {result.threshold})"
		)
	return result.to_dict()


def cmd_gradcheck(args: argparse.Namespace, config: RunConfig) -> Dict[str, Any]:
	results = run_gradcheck_suite(seed=args.seed)
	worst = max(results, key=lambda result: result.max_rel_error)
	summary = {
		"max_rel_error": worst.max_rel_error,
		"worst_case": worst.name,
		"tolerance": TOLERANCE,
		"cases": {result.name: result.max_rel_error for result in results},
	}
	if not all(result.passed for result in results):
		print(json.dumps(summary, indent=2))
		raise NumericalError(f"gradcheck: error relativo {worst.max_rel_error:.3e} en {worst.name}")
	return summary


_COMMANDS = {
	"synth": cmd_synth,
	"label": cmd_label,
	"train": cmd_train,
	"generate": cmd_generate,
	"eval": cmd_eval,
	"experiment": cmd_experiment,
	"overfit": cmd_overfit,
	"gradcheck": cmd_gradcheck,
}


def main(argv: Optional[List[str]] = None) -> int:
	args = build_parser().parse_args(argv)
	try:
		config = _resolve(args)
	except OSError as exc:
		deps.configure_logging("INFO")
		logger.error("cli: archivo no disponible", path=exc.filename, error=exc.strerror)
		return EXIT_IO
	except DomainError as exc:
		deps.configure_logging("INFO")
		logger.error("cli: configuración inválida", error=str(exc))
		return EXIT_INVALID
	deps.configure_logging(config.log_level)
	try:
		summary = _COMMANDS[args.command](args, config)
	except OSError as exc:
		logger.error("cli: error de E/S", path=exc.filename, error=exc.strerror or str(exc))
		return EXIT_IO
	except NumericalError as exc:
		logger.error("cli: fallo numérico", error=str(exc))
		return EXIT_NUMERICAL
	except DomainError as exc:
		logger.error("cli: datos o configuración inválidos", error=str(exc))
		return EXIT_INVALID
	print(json.dumps(summary, indent=2, default=str))
	return EXIT_OK


if __name__ == "__main__":
	sys.exit(main())

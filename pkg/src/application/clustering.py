"""k-means (Lloyd + inicialización k-means++) y diagnósticos de pureza frente a tipos plantados."""

from __future__ import annotations

import itertools
from typing import Dict, Optional, Sequence

import numpy as np
import structlog

from src.domain.entities import KMeansModel
from src.domain.exceptions import InsufficientPointsError

logger = structlog.get_logger()

MAX_ITER = 100


def kmeans_plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
	n_points = points.shape[0]
	centroids = np.empty((k, points.shape[1]), dtype=float)
	centroids[0] = points[rng.integers(0, n_points)]
	for i in range(1, k):
		dist_sq = np.min(((points[:, None, :] - centroids[None, :i, :]) ** 2).sum(axis=-1), axis=1)
		total = dist_sq.sum()
		if total <= 0.0:
			# Todos los puntos coinciden con algún centroide: se elige uniforme.
			centroids[i] = points[rng.integers(0, n_points)]
			continue
		centroids[i] = points[rng.choice(n_points, p=dist_sq / total)]
	return centroids


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
	return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)


def kmeans_fit(
	points: np.ndarray,
	k: int,
	*,
	seed: int = 0,
	max_iter: int = MAX_ITER,
	n_init: int = 1,
) -> KMeansModel:
	"""Lloyd hasta que las asignaciones no cambian o `max_iter` iteraciones.

	Con `n_init` > 1 se repite desde inicializaciones k-means++ distintas y se
	queda el ajuste de menor inercia final. `inertia_history[t]` es la suma de
	cuadrados intra-cluster de la iteración t (no creciente). Un cluster vacío
	conserva su centroide anterior.
	"""
	pts = np.atleast_2d(np.asarray(points, dtype=float))
	if k < 1:
		raise InsufficientPointsError(f"k debe ser ≥ 1 (recibido {k})")
	if pts.shape[0] < k:
		raise InsufficientPointsError(f"kmeans_fit: {pts.shape[0]} puntos para k={k} clusters")
	rng = np.random.default_rng(seed)
	best: Optional[KMeansModel] = None
	for _ in range(max(1, n_init)):
		model = _lloyd(pts, kmeans_plusplus_init(pts, k, rng), max_iter)
		if best is None or model.inertia_history[-1] < best.inertia_history[-1]:
			best = model
	logger.info(
		"kmeans: ajuste completado",
		k=k,
		n_points=int(pts.shape[0]),
		n_init=max(1, n_init),
		iterations=best.n_iter,
		inertia=best.inertia_history[-1],
	)
	return best


def _lloyd(pts: np.ndarray, centroids: np.ndarray, max_iter: int) -> KMeansModel:
	assignments: Optional[np.ndarray] = None
	history = []
	n_iter = 0
	for n_iter in range(1, max_iter + 1):
		distances = _sq_distances(pts, centroids)
		new_assignments = np.argmin(distances, axis=1)
		history.append(float(distances[np.arange(pts.shape[0]), new_assignments].sum()))
		if assignments is not None and np.array_equal(new_assignments, assignments):
			break
		assignments = new_assignments
		for j in range(centroids.shape[0]):
			members = pts[assignments == j]
			if members.shape[0] == 0:
				logger.warning("kmeans: cluster vacío, se conserva el centroide", cluster=j, iteration=n_iter)
				continue
			centroids[j] = members.mean(axis=0)
	return KMeansModel(centroids=centroids, inertia_history=history, n_iter=n_iter)


def cluster_purity(assignments: Sequence[int], truth: Sequence[int]) -> float:
	"""Fracción de puntos cuyo cluster tiene como tipo mayoritario el suyo."""
	pred = np.asarray(assignments, dtype=int)
	true = np.asarray(truth, dtype=int)
	if pred.size == 0:
		return 0.0
	majority = 0
	for cluster in np.unique(pred):
		majority += int(np.bincount(true[pred == cluster]).max())
	return majority / pred.size


def best_label_mapping(assignments: Sequence[int], truth: Sequence[int], k: int) -> Dict[int, int]:
	"""Permutación cluster → tipo plantado con más coincidencias (búsqueda exhaustiva, k pequeño)."""
	pred = np.asarray(assignments, dtype=int)
	true = np.asarray(truth, dtype=int)
	n_types = max(k, int(true.max()) + 1 if true.size else k)
	best: Dict[int, int] = {cluster: cluster for cluster in range(k)}
	best_hits = -1
	for perm in itertools.permutations(range(n_types), k):
		hits = int(sum(np.sum((pred == cluster) & (true == perm[cluster])) for cluster in range(k)))
		if hits > best_hits:
			best_hits = hits
			best = {cluster: perm[cluster] for cluster in range(k)}
	return best


def template_match_rate(
	predicted: Sequence[Sequence[int]],
	planted: Sequence[Sequence[int]],
	mapping: Dict[int, int],
) -> float:
	"""Fracción de recetas cuya secuencia de etiquetas, traducida por `mapping`, iguala la plantada."""
	if not predicted:
		return 0.0
	hits = sum(
		1
		for labels, types in zip(predicted, planted)
		if [mapping.get(label, -1) for label in labels] == list(types)
	)
	return hits / len(predicted)

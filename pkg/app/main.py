import asyncio
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import click
from sqlalchemy.ext.asyncio import AsyncEngine, AsyncSession, async_sessionmaker

from app.core.config import ExternalCorpus, PipelineConfig, load_pipeline_config, settings
from app.core.exceptions import ConfigError, PipelineError, UsageError, usage_error
from app.database.db import init_models, make_engine, make_session_maker, store_url
from app.database.db_depends import get_db
from app.models.enum import Stage
from app.schemas.corpus import ItemRecord, RawReviewRecord
from app.services import stage_service
from app.services.abstraction_service import abstract_corpus, export_abstracts
from app.services.corpus_service import ingest_reviews, load_databases, load_records, save_databases
from app.services.engine_service import compact_dialogues, load_dialogues, run_batch
from app.services.filter_service import apply_filters, write_filter_outputs
from app.services.gateway_service import LLMGateway, build_gateway
from app.services.metrics_service import compute_report, format_report, read_rankings, read_responses
from app.services.transcript_adapters import from_dialogue, load_corpus
from app.utils.jsonl import write_json

# ✅ Настройка логирования
logging.basicConfig(
    level=logging.INFO if not settings.DEBUG else logging.DEBUG,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


@dataclass
class StageResult:
    """Итог стадии: сводка для отчета и число частичных сбоев"""

    stage: Stage
    summary: dict[str, Any]
    failures: int = 0
    details: dict[str, Any] = field(default_factory=dict)


@dataclass
class Pipeline:
    """Общие ресурсы одного запуска CLI: конфиг, хранилище, шлюз"""

    config: PipelineConfig
    session_maker: async_sessionmaker[AsyncSession] | None = None
    gateway: LLMGateway | None = None
    engine: AsyncEngine | None = None

    @property
    def header(self) -> dict[str, Any]:
        return self.config.echo()

    async def open(self) -> None:
        paths = self.config.paths
        paths.work_dir.mkdir(parents=True, exist_ok=True)
        self.engine = make_engine(settings.DATABASE_URL or store_url(paths.store))
        await init_models(self.engine)
        self.session_maker = make_session_maker(self.engine)
        # шлюз собирается до стадий: отсутствие ключа API - ошибка конфига до сети
        self.gateway = build_gateway(self.config, settings, self.session_maker)

    async def close(self) -> None:
        if self.gateway is not None:
            await self.gateway.aclose()
        if self.engine is not None:
            await self.engine.dispose()

    def write_report(self, stage: Stage, report: dict[str, Any]) -> None:
        write_json(self.config.paths.report(stage.value), {"config": self.header, "report": report})


# ---------- Стадии ---------- #
async def cmd_ingest(pipe: Pipeline) -> StageResult:
    paths = pipe.config.paths
    for key, path in (("paths.reviews", paths.reviews), ("paths.items", paths.items)):
        if not path.exists():
            raise ConfigError(f"{key}: file {path} does not exist", key=key)
    reviews, review_errors = load_records(paths.reviews, RawReviewRecord)
    items, item_errors = load_records(paths.items, ItemRecord)
    user_db, item_db, report = ingest_reviews(reviews, items, review_errors + item_errors)
    async with get_db(pipe.session_maker) as db:
        await stage_service.reset_from(db, Stage.INGEST)
        await save_databases(db, user_db, item_db)
    return StageResult(Stage.INGEST, report.model_dump(mode="json"), failures=report.malformed)


async def cmd_abstract(pipe: Pipeline, progress: bool) -> StageResult:
    config = pipe.config
    async with get_db(pipe.session_maker) as db:
        user_db, item_db = await load_databases(db)
    user_db, item_db, report = await abstract_corpus(
        pipe.gateway,
        pipe.session_maker,
        user_db,
        item_db,
        parallelism=config.parallelism,
        temperature=config.backend.summary_temperature,
        max_tokens=config.backend.max_tokens,
        max_reasks=config.session.max_reasks,
        prompts_dir=config.paths.prompts_dir,
        progress=progress,
    )
    export_abstracts(user_db, item_db, config.paths.abstracts, config.paths.item_knowledge, pipe.header)
    return StageResult(
        Stage.ABSTRACT,
        report.model_dump(mode="json"),
        failures=report.reviews_failed + report.items_failed,
    )


async def cmd_generate(pipe: Pipeline, progress: bool) -> StageResult:
    config = pipe.config
    async with get_db(pipe.session_maker) as db:
        user_db, item_db = await load_databases(db)
    report = await run_batch(pipe.gateway, user_db, item_db, config, header=pipe.header, progress=progress)
    compact_dialogues(config.paths.dialogues_raw, config.paths.dialogues, pipe.header)
    # после повтора сессии транспортные сбои считаются частичным отказом стадии
    return StageResult(
        Stage.GENERATE,
        report.model_dump(mode="json"),
        failures=report.abort_reasons.get("transport_error", 0),
    )


async def cmd_filter(pipe: Pipeline, progress: bool) -> StageResult:
    config = pipe.config
    if not config.paths.dialogues.exists():
        usage_error(f"{config.paths.dialogues} is missing: run 'generate' first")
    dialogues = load_dialogues(config.paths.dialogues)
    kept, verdicts, report = await apply_filters(
        dialogues, pipe.gateway, config.filters, parallelism=config.parallelism, progress=progress
    )
    write_filter_outputs(kept, verdicts, config.paths.kept, config.paths.verdicts, pipe.header)
    return StageResult(
        Stage.FILTER,
        report.model_dump(mode="json"),
        failures=report.held,
        details={"held_ids": report.held_ids},
    )


async def cmd_stats(pipe: Pipeline, corpora: list[ExternalCorpus]) -> StageResult:
    config = pipe.config
    metrics = config.metrics
    named = []
    for name, path in (("generated", config.paths.dialogues), ("filtered", config.paths.kept)):
        if path.exists():
            named.append((name, [from_dialogue(d) for d in load_dialogues(path)]))
    for corpus in [*metrics.corpora, *corpora]:
        if not corpus.path.exists():
            raise ConfigError(f"metrics.corpora: file {corpus.path} does not exist", key="metrics.corpora")
        named.append((corpus.name or corpus.path.stem, load_corpus(corpus)))
    if not named:
        usage_error("no corpus to measure: run 'generate' first or pass --corpus")

    responses = read_responses(metrics.responses) if metrics.responses else None
    episodes = read_rankings(metrics.rankings) if metrics.rankings else None
    reports = []
    for index, (name, transcripts) in enumerate(named):
        # ответы и ранжирования модели относятся к первому (основному) корпусу
        extra = dict(responses=responses, episodes=episodes) if index == 0 else {}
        reports.append(
            await compute_report(name, transcripts, metrics, gateway=pipe.gateway, seed=config.seed, **extra)
        )

    table = format_report(reports)
    config.paths.metrics_table.write_text(table, encoding="utf-8")
    click.echo(table)
    return StageResult(Stage.STATS, {"corpora": [r.model_dump(mode="json") for r in reports]})


# ---------- Запуск ---------- #
async def run_stages(
    config: PipelineConfig,
    stages: list[Stage],
    *,
    corpora: list[ExternalCorpus] | None = None,
    progress: bool = True,
) -> list[StageResult]:
    """Стадии по порядку; каждая проверяет, что предыдущая завершена"""
    config.check_stages(stages)
    pipe = Pipeline(config)
    results = []
    try:
        await pipe.open()
        for stage in stages:
            async with get_db(pipe.session_maker) as db:
                # stats на внешних корпусах не требует собственной генерации
                if not (stage == Stage.STATS and (corpora or config.metrics.corpora)):
                    await stage_service.require_previous(db, stage)
            logger.info(f"🚀 Stage '{stage.value}' started")
            started = time.monotonic()
            if stage == Stage.INGEST:
                result = await cmd_ingest(pipe)
            elif stage == Stage.ABSTRACT:
                result = await cmd_abstract(pipe, progress)
            elif stage == Stage.GENERATE:
                result = await cmd_generate(pipe, progress)
            elif stage == Stage.FILTER:
                result = await cmd_filter(pipe, progress)
            else:
                result = await cmd_stats(pipe, corpora or [])
            pipe.write_report(stage, result.summary)
            async with get_db(pipe.session_maker) as db:
                await stage_service.mark_completed(db, stage, {"failures": result.failures})
            logger.info(f"⏳ Stage '{stage.value}' took {time.monotonic() - started:.1f}s")
            results.append(result)
    finally:
        await pipe.close()
    return results


def fail(error: dict[str, Any], code: int) -> None:
    click.echo(json.dumps(error, ensure_ascii=False, sort_keys=True), err=True)
    sys.exit(code)


def execute(ctx: click.Context, stages: list[Stage], corpora: list[ExternalCorpus] | None = None) -> None:
    """Общая обертка команд: конфиг -> стадии -> код выхода и JSON-сводка ошибок"""
    options = ctx.obj
    try:
        config = load_pipeline_config(options["config_path"], options["overrides"])
        results = asyncio.run(run_stages(config, stages, corpora=corpora, progress=options["progress"]))
    except (ConfigError, UsageError) as e:
        logger.error(f"❌ {e.detail}")
        fail(e.to_dict(), EXIT_USAGE)
    except PipelineError as e:
        logger.error(f"❌ {e.code}: {e.detail}")
        fail(e.to_dict(), EXIT_PARTIAL)
    except KeyboardInterrupt:
        # журналы пишутся с flush на каждую запись: --resume продолжит с места остановки
        logger.warning("🛑 Interrupted, checkpoints flushed")
        fail({"error": "interrupted", "detail": "run again with --resume to continue"}, 130)

    partial = [r for r in results if r.failures]
    if partial:
        fail(
            {
                "error": "partial_failure",
                "stages": {r.stage.value: {"failures": r.failures, **r.details} for r in partial},
            },
            EXIT_PARTIAL,
        )
    logger.info(f"✅ Done: {', '.join(r.stage.value for r in results)}")


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None, help="YAML-конфиг пайплайна")
@click.option("--seed", type=int, default=None, help="Глобальный seed (seed)")
@click.option("--parallelism", type=click.IntRange(min=1), default=None, help="Число параллельных задач (parallelism)")
@click.option("--backend", type=click.Choice(["remote", "mock"]), default=None, help="Бэкенд (backend.kind)")
@click.option("--limit-users", type=click.IntRange(min=1), default=None, help="Первые N пользователей (limit_users)")
@click.option("--resume/--no-resume", default=None, help="Продолжить с контрольного журнала (resume)")
@click.option("--progress/--no-progress", default=None, help="Прогресс-бары tqdm (по умолчанию - если TTY)")
@click.pass_context
def cli(ctx, config_path, seed, parallelism, backend, limit_users, resume, progress):
    """Синтез диалогов рекомендательной системы: ingest -> abstract -> generate -> filter -> stats"""
    ctx.obj = {
        "config_path": config_path,
        "overrides": {
            "seed": seed,
            "parallelism": parallelism,
            "backend.kind": backend,
            "limit_users": limit_users,
            "resume": resume,
        },
        "progress": sys.stderr.isatty() if progress is None else progress,
    }


@cli.command()
@click.pass_context
def ingest(ctx):
    """Загрузить отзывы и фильмы в хранилище"""
    execute(ctx, [Stage.INGEST])


@cli.command()
@click.pass_context
def abstract(ctx):
    """Выжимки like/dislike по отзывам и знания о фильмах"""
    execute(ctx, [Stage.ABSTRACT])


@cli.command()
@click.pass_context
def generate(ctx):
    """Сгенерировать диалоги"""
    execute(ctx, [Stage.GENERATE])


@cli.command(name="filter")
@click.pass_context
def filter_cmd(ctx):
    """Отфильтровать сгенерированные диалоги"""
    execute(ctx, [Stage.FILTER])


@cli.command()
@click.option("--corpus", "corpus_paths", multiple=True, type=click.Path(path_type=Path), help="Внешний корпус")
@click.option(
    "--format",
    "corpus_format",
    type=click.Choice(["normalized", "redial", "inspired"]),
    default="normalized",
    help="Формат внешних корпусов",
)
@click.pass_context
def stats(ctx, corpus_paths, corpus_format):
    """Метрики корпусов и таблица сравнения"""
    corpora = [ExternalCorpus(path=path, format=corpus_format) for path in corpus_paths]
    execute(ctx, [Stage.STATS], corpora)


@cli.command(name="all")
@click.pass_context
def all_cmd(ctx):
    """Все стадии по порядку"""
    execute(ctx, list(Stage))


if __name__ == "__main__":
    cli()

# python -m app.main --config config.example.yaml all
# alembic -c alembic.ini upgrade head
# pip install -r requirements.txt

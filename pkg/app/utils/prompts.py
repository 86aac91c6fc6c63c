from functools import lru_cache
from pathlib import Path

from jinja2 import Environment, FileSystemLoader, StrictUndefined, TemplateNotFound

from app.core.exceptions import config_error

# Шаблоны промптов по умолчанию
PROMPTS_DIR = Path(__file__).resolve().parent.parent / "templates" / "prompts"

USER_REVIEW = "user_review.j2"
ITEM_REVIEWS = "item_reviews.j2"
SEEKER = "seeker.j2"
RECOMMENDER = "recommender.j2"
FORMAT_REMINDER = "format_reminder.j2"


@lru_cache(maxsize=8)
def _environment(prompts_dir: Path | None) -> Environment:
    # Каталог из конфига перекрывает встроенный; недостающие шаблоны берутся из встроенного
    search = [str(prompts_dir)] if prompts_dir else []
    search.append(str(PROMPTS_DIR))
    return Environment(
        loader=FileSystemLoader(search),
        undefined=StrictUndefined,
        autoescape=False,
        trim_blocks=True,
        keep_trailing_newline=False,
    )


def render_prompt(
    name: str, prompts_dir: Path | None = None, override: Path | None = None, **context
) -> str:
    """override - путь к конкретному файлу шаблона (session.seeker_template и т.п.)"""
    env = _environment(prompts_dir)
    try:
        if override is not None:
            if not override.exists():
                config_error(str(override), "prompt template not found")
            template = env.from_string(override.read_text(encoding="utf-8"))
        else:
            template = env.get_template(name)
    except TemplateNotFound:
        config_error("paths.prompts_dir", f"prompt template {name} not found")
    return template.render(**context).strip()

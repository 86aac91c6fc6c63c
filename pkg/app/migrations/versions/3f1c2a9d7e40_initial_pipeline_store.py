"""Initial pipeline store

Revision ID: 3f1c2a9d7e40
Revises:
Create Date: 2026-10-19 12:00:00.000000

"""

from typing import Sequence, Union

from alembic import op
import sqlalchemy as sa


# revision identifiers, used by Alembic.
revision: str = "3f1c2a9d7e40"
down_revision: Union[str, Sequence[str], None] = None
branch_labels: Union[str, Sequence[str], None] = None
depends_on: Union[str, Sequence[str], None] = None


def upgrade() -> None:
    """Upgrade schema."""
    op.create_table(
        "item",
        sa.Column("item_id", sa.String(), nullable=False),
        sa.Column("title", sa.String(), nullable=False),
        sa.Column("genre", sa.JSON(), nullable=True),
        sa.Column("director", sa.JSON(), nullable=True),
        sa.Column("cast", sa.JSON(), nullable=True),
        sa.Column("like", sa.Text(), nullable=True),
        sa.Column("dislike", sa.Text(), nullable=True),
        sa.Column("knowledge_sources", sa.JSON(), nullable=True),
        sa.Column("knowledge_failed", sa.Boolean(), nullable=True),
        sa.Column("updated_at", sa.DateTime(timezone=True), nullable=True),
        sa.PrimaryKeyConstraint("item_id"),
    )
    op.create_table(
        "review",
        sa.Column("id", sa.Integer(), nullable=False),
        sa.Column("review_id", sa.String(), nullable=False),
        sa.Column("user_id", sa.String(), nullable=False),
        sa.Column("item_id", sa.String(), nullable=False),
        sa.Column("title", sa.String(), nullable=False),
        sa.Column("rating", sa.Integer(), nullable=False),
        sa.Column("text", sa.Text(), nullable=False),
        sa.Column("votes", sa.Integer(), nullable=True),
        sa.Column("seq", sa.Integer(), nullable=False),
        sa.Column("like", sa.Text(), nullable=True),
        sa.Column("dislike", sa.Text(), nullable=True),
        sa.Column("abstract_failed", sa.Boolean(), nullable=True),
        sa.Column("created_at", sa.DateTime(timezone=True), nullable=True),
        sa.ForeignKeyConstraint(["item_id"], ["item.item_id"]),
        sa.PrimaryKeyConstraint("id"),
        sqlite_autoincrement=True,
    )
    op.create_index(op.f("ix_review_id"), "review", ["id"], unique=False)
    op.create_index(op.f("ix_review_review_id"), "review", ["review_id"], unique=True)
    op.create_index(op.f("ix_review_user_id"), "review", ["user_id"], unique=False)
    op.create_index("ix_review_user_seq", "review", ["user_id", "seq"], unique=False)
    op.create_index("ix_review_item_votes", "review", ["item_id", "votes"], unique=False)
    op.create_table(
        "response_cache",
        sa.Column("key", sa.String(length=64), nullable=False),
        sa.Column("kind", sa.String(), nullable=False),
        sa.Column("model_tag", sa.String(), nullable=False),
        sa.Column("payload", sa.Text(), nullable=False),
        sa.Column("created_at", sa.DateTime(timezone=True), nullable=True),
        sa.PrimaryKeyConstraint("key"),
    )
    op.create_index("ix_response_cache_kind", "response_cache", ["kind"], unique=False)
    op.create_table(
        "embedding_cache",
        sa.Column("key", sa.String(length=64), nullable=False),
        sa.Column("model_tag", sa.String(), nullable=False),
        sa.Column("vector", sa.JSON(), nullable=False),
        sa.Column("truncated", sa.Boolean(), nullable=True),
        sa.PrimaryKeyConstraint("key"),
    )
    op.create_table(
        "stage_status",
        sa.Column("stage", sa.String(), nullable=False),
        sa.Column("completed", sa.Boolean(), nullable=True),
        sa.Column("summary", sa.JSON(), nullable=True),
        sa.Column("updated_at", sa.DateTime(timezone=True), nullable=True),
        sa.PrimaryKeyConstraint("stage"),
    )


def downgrade() -> None:
    """Downgrade schema."""
    op.drop_table("stage_status")
    op.drop_table("embedding_cache")
    op.drop_index("ix_response_cache_kind", table_name="response_cache")
    op.drop_table("response_cache")
    op.drop_index("ix_review_item_votes", table_name="review")
    op.drop_index("ix_review_user_seq", table_name="review")
    op.drop_index(op.f("ix_review_user_id"), table_name="review")
    op.drop_index(op.f("ix_review_review_id"), table_name="review")
    op.drop_index(op.f("ix_review_id"), table_name="review")
    op.drop_table("review")
    op.drop_table("item")

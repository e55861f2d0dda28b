from django.db import models

from .dataset import PairingMode
from .neuro_amp.architectures import Architecture


class TrainingRun(models.Model):
    """One `train` invocation. The files in run_dir stay the source of truth."""

    arch = models.CharField(max_length=16, choices=Architecture.choices)
    mode = models.CharField(max_length=16, choices=PairingMode.choices, default=PairingMode.NEUROAMP)
    seed = models.PositiveBigIntegerField(default=0)
    run_dir = models.CharField(max_length=1024)
    checkpoint_path = models.CharField(max_length=1024, blank=True, default="")
    parameter_count = models.PositiveIntegerField(default=0)
    best_epoch = models.PositiveIntegerField(blank=True, null=True)
    best_val_loss = models.FloatField(blank=True, null=True)
    stopped_early = models.BooleanField(default=False)
    resolved_config = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self) -> str:
        return f"{self.arch}/{self.mode} seed {self.seed} ({self.epochs.count()} epochs)"


class EpochRecord(models.Model):
    run = models.ForeignKey(TrainingRun, on_delete=models.CASCADE, related_name="epochs")
    epoch = models.PositiveIntegerField()
    train_loss = models.FloatField()
    val_loss = models.FloatField()

    class Meta:
        ordering = ["run", "epoch"]
        constraints = [
            models.UniqueConstraint(fields=["run", "epoch"], name="hearing_epoch_unique_per_run"),
        ]

    def __str__(self) -> str:
        return f"epoch {self.epoch}: train {self.train_loss:.4f}, val {self.val_loss:.4f}"

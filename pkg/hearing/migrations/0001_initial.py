# Generated by Django 5.2.5 on 2026-10-19 09:12

import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='TrainingRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('arch', models.CharField(choices=[('cnn', 'CNN'), ('lstm', 'LSTM'), ('crnn', 'CRNN'), ('transformer', 'Transformer')], max_length=16)),
                ('mode', models.CharField(choices=[('neuroamp', 'Input and its own amplified reference'), ('denoising', 'Noisy input and the amplified clean reference')], default='neuroamp', max_length=16)),
                ('seed', models.PositiveBigIntegerField(default=0)),
                ('run_dir', models.CharField(max_length=1024)),
                ('checkpoint_path', models.CharField(blank=True, default='', max_length=1024)),
                ('parameter_count', models.PositiveIntegerField(default=0)),
                ('best_epoch', models.PositiveIntegerField(blank=True, null=True)),
                ('best_val_loss', models.FloatField(blank=True, null=True)),
                ('stopped_early', models.BooleanField(default=False)),
                ('resolved_config', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='EpochRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('epoch', models.PositiveIntegerField()),
                ('train_loss', models.FloatField()),
                ('val_loss', models.FloatField()),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='epochs', to='hearing.trainingrun')),
            ],
            options={
                'ordering': ['run', 'epoch'],
                'constraints': [models.UniqueConstraint(fields=('run', 'epoch'), name='hearing_epoch_unique_per_run')],
            },
        ),
    ]

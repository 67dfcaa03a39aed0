import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('adiabatic', 'Adiabatic evolution'), ('rodeo_scan', 'Rodeo energy scan'), ('rodeo_prepare', 'Rodeo eigenstate preparation'), ('hellmann_feynman', 'Hellmann-Feynman extraction'), ('vra', 'Variational rodeo'), ('pulse', 'Pulse emulation')], max_length=32)),
                ('status', models.CharField(choices=[('running', 'Running'), ('complete', 'Complete'), ('incomplete', 'Incomplete'), ('check_failed', 'Check failed')], default='running', max_length=16)),
                ('config', models.JSONField(default=dict)),
                ('config_hash', models.CharField(max_length=64)),
                ('seed', models.CharField(max_length=20)),
                ('rng_algorithm', models.CharField(max_length=64)),
                ('tool_version', models.CharField(max_length=32)),
                ('threads', models.PositiveIntegerField(default=1)),
                ('output_dir', models.CharField(max_length=500)),
                ('wall_time', models.FloatField(blank=True, default=0.0)),
                ('checks', models.JSONField(blank=True, default=dict)),
                ('metadata', models.JSONField(blank=True, default=dict)),
                ('error', models.TextField(blank=True, default='')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='RunOutput',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('path', models.CharField(max_length=255)),
                ('sha256', models.CharField(max_length=64)),
                ('rows', models.IntegerField(blank=True, default=0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='outputs', to='eigenprep.experimentrun')),
            ],
            options={
                'ordering': ['path'],
                'unique_together': {('run', 'path')},
            },
        ),
    ]

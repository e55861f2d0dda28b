from rest_framework import serializers

from .dataset import Condition, ManifestEntry, PairingMode, Split
from .exceptions import InvalidAudiogram, InvalidConfig
from .neuro_amp.architectures import PRESETS, Architecture, preset_config
from .neuro_amp.training import TrainConfig
from .prescription import AUDIOGRAM_FREQUENCIES_HZ, MAX_THRESHOLD_DB_HL, Audiogram
from .wdrc import N_BANDS, CompressorConfig


class PerBandField(serializers.Field):
    """A number applied to every band, or one number per band."""

    default_error_messages = {
        "invalid": "Expected a number or a list of {count} numbers.",
    }

    def to_internal_value(self, data):
        if isinstance(data, bool):
            self.fail("invalid", count=N_BANDS)
        if isinstance(data, (int, float)):
            return float(data)
        if isinstance(data, list) and len(data) == N_BANDS and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in data
        ):
            return tuple(float(v) for v in data)
        self.fail("invalid", count=N_BANDS)

    def to_representation(self, value):
        return list(value) if isinstance(value, (list, tuple)) else value


class AudiogramSerializer(serializers.Serializer):
    """Validates one audiogram document: an id and six thresholds in dB HL."""

    id = serializers.CharField(max_length=128, default="audiogram")
    thresholds_db_hl = serializers.ListField(
        child=serializers.FloatField(min_value=0.0, max_value=MAX_THRESHOLD_DB_HL),
        min_length=len(AUDIOGRAM_FREQUENCIES_HZ),
        max_length=len(AUDIOGRAM_FREQUENCIES_HZ),
    )

    def create(self, validated_data):
        try:
            return Audiogram(tuple(validated_data["thresholds_db_hl"]), validated_data["id"])
        except InvalidAudiogram as exc:
            raise serializers.ValidationError(str(exc))


class _ConfigSerializer(serializers.Serializer):
    """Builds a frozen config object; domain validation errors become field errors."""

    config_class = None

    def build(self, validated_data):
        return self.config_class(**validated_data)

    def validate(self, attrs):
        try:
            self.build(dict(attrs))
        except InvalidConfig as exc:
            raise serializers.ValidationError(str(exc))
        return attrs

    def create(self, validated_data):
        return self.build(dict(validated_data))


class CompressorConfigSerializer(_ConfigSerializer):
    config_class = CompressorConfig

    band_edges_hz = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), min_length=N_BANDS + 1, max_length=N_BANDS + 1, required=False
    )
    kneepoint_db_spl = PerBandField(required=False)
    ratio = PerBandField(required=False)
    attack_ms = serializers.FloatField(required=False)
    release_ms = serializers.FloatField(required=False)
    calib_spl_at_0_dbfs = serializers.FloatField(required=False)


class ModelConfigSerializer(_ConfigSerializer):
    preset = serializers.ChoiceField(choices=sorted(PRESETS), default="desk")
    arch = serializers.ChoiceField(choices=Architecture.choices, required=False)
    audiogram_embed_dim = serializers.IntegerField(min_value=1, required=False)
    cnn_filters = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1, required=False)
    lstm_units = serializers.IntegerField(min_value=1, required=False)
    lstm_layers = serializers.IntegerField(min_value=1, required=False)
    crnn_filters = serializers.ListField(child=serializers.IntegerField(min_value=1), min_length=1, required=False)
    tfm_blocks = serializers.IntegerField(min_value=1, required=False)
    tfm_heads = serializers.IntegerField(min_value=1, required=False)
    tfm_dim = serializers.IntegerField(min_value=1, required=False)
    tfm_ffn_dim = serializers.IntegerField(min_value=1, required=False)
    positional_encoding = serializers.BooleanField(required=False)
    skip_connection = serializers.BooleanField(required=False)
    out_bins = serializers.IntegerField(required=False)

    def build(self, validated_data):
        preset = validated_data.pop("preset", "desk")
        return preset_config(preset, **validated_data)


class TrainConfigSerializer(_ConfigSerializer):
    config_class = TrainConfig

    lr = serializers.FloatField(required=False)
    beta1 = serializers.FloatField(required=False)
    beta2 = serializers.FloatField(required=False)
    epsilon = serializers.FloatField(required=False)
    batch_size = serializers.IntegerField(required=False)
    max_epochs = serializers.IntegerField(required=False)
    early_stop_patience = serializers.IntegerField(required=False)
    seed = serializers.IntegerField(min_value=0, required=False)


class ManifestEntrySerializer(serializers.Serializer):
    """One line of a JSON Lines manifest."""

    utt_id = serializers.CharField(max_length=255)
    input_path = serializers.CharField()
    target_path = serializers.CharField(allow_blank=True, default="")
    clean_path = serializers.CharField()
    audiogram_id = serializers.CharField(allow_blank=True, default="")
    condition = serializers.ChoiceField(choices=Condition.choices)
    snr_db = serializers.FloatField(allow_null=True, default=None)
    split = serializers.ChoiceField(choices=Split.choices)
    source_id = serializers.CharField(allow_blank=True, default="")

    def create(self, validated_data):
        return ManifestEntry(**validated_data)


class RunConfigSerializer(serializers.Serializer):
    """A run's configuration document; sections omitted fall back to built-in defaults."""

    seed = serializers.IntegerField(min_value=0, required=False)
    jobs = serializers.IntegerField(min_value=1, required=False)
    mode = serializers.ChoiceField(choices=PairingMode.choices, required=False)
    audiograms_per_utterance = serializers.IntegerField(min_value=1, required=False)
    compressor = serializers.DictField(required=False)
    model = serializers.DictField(required=False)
    train = serializers.DictField(required=False)
    paths = serializers.DictField(child=serializers.CharField(), required=False)

    section_serializers = {
        "compressor": CompressorConfigSerializer,
        "model": ModelConfigSerializer,
        "train": TrainConfigSerializer,
    }

    def validate(self, attrs):
        errors = {}
        for section, serializer_class in self.section_serializers.items():
            if section in attrs:
                serializer = serializer_class(data=attrs[section])
                if not serializer.is_valid():
                    errors[section] = serializer.errors
        if errors:
            raise serializers.ValidationError(errors)
        return attrs

"""
Hierarquia de erros de domínio.

Cada erro carrega um código estável (lido por máquinas no stderr da CLI) e o
código de saída do processo. Erros fora desta hierarquia são tratados como
erros internos (saída 2).
"""


class DexVLAError(Exception):
    code = "E_DOMAIN"
    exit_code = 1


class ConfigError(DexVLAError):
    code = "E_CONFIG"


class DimensionError(DexVLAError):
    code = "E_DIMENSION"


class ContractError(DexVLAError):
    code = "E_CONTRACT"


class NumericError(DexVLAError):
    code = "E_NUMERIC"


class TimestepRangeError(DexVLAError, IndexError):
    code = "E_TIMESTEP"


class RegistryError(DexVLAError):
    code = "E_REGISTRY"


class CheckpointCompatibilityError(DexVLAError):
    code = "E_CHECKPOINT"


class RoutingError(DexVLAError):
    code = "E_ROUTING"


class IngestError(DexVLAError):
    code = "E_INGEST"


class ContextOverflowError(DexVLAError):
    code = "E_CONTEXT"


class TaskGenerationError(DexVLAError):
    code = "E_TASKGEN"


class AnnotationError(DexVLAError):
    code = "E_ANNOTATION"


class DatasetGenerationError(DexVLAError):
    code = "E_DATASET"


class FormatError(DexVLAError):
    code = "E_FORMAT"


class StatsError(DexVLAError):
    code = "E_STATS"


class EmptySelectionError(DexVLAError):
    code = "E_EMPTY"


class GraftError(DexVLAError):
    code = "E_GRAFT"

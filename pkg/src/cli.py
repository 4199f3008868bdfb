"""
Ponto de entrada único: python -m src.cli <verbo> ...

Saída 0 em sucesso, 1 em erro de domínio (configuração, dados, contrato) e 2 em
erro interno. Erros saem numa única linha no stderr:

    error code=<CÓDIGO> message=<texto>
"""
import argparse
import logging
import sys
from typing import List, Optional

from src.config import setup_logging
from src.errors import DexVLAError
from src.evaluation.ablations import ABLATIONS
from src.evaluation.trials import DEFAULT_TRIALS
from src.main import serve
from src.scripts import ablate, bench, deploy, download, evaluate, gen_data, inspect_ckpt, plot, train
from src.training.bench import MIN_STEPS

log = logging.getLogger(__name__)

INTERNAL_EXIT = 2


def _gen_data(args):
    gen_data.main(args.config, args.seed, args.out, args.set, progress=not args.quiet)


def _train(args):
    train.main(args.stage, args.config, args.data, args.init, args.from_scratch, args.out, args.seed, args.set,
               progress=not args.quiet)


def _eval(args):
    evaluate.main(args.checkpoint, args.tasks, args.embodiment, args.trials, args.seed, args.out, args.n_jobs,
                  args.generalization)


def _ablate(args):
    ablate.main(args.name, args.budget, args.out, args.data, args.set, args.seeds)


def _bench(args):
    bench.main(args.stage, args.config, args.data, args.steps, args.out, args.set, args.seed)


def _inspect(args):
    inspect_ckpt.main(args.checkpoint)


def _plot(args):
    plot.main(args.path, args.out)


def _serve(args):
    serve(args.host, args.port)


def _publish(args):
    deploy.main(args.checkpoint, args.tasks, args.embodiment, args.trials, args.seed, args.min_score, args.repo)


def _download(args):
    download.main(args.repo, args.username, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dexvla", description="DexVLA de bancada")
    parser.add_argument("--log-level", default=None, help="nível de log (padrão: LOG_LEVEL)")
    verbs = parser.add_subparsers(dest="verb", required=True)

    p = verbs.add_parser("gen-data", help="gera um dataset sintético a partir de uma receita")
    p.add_argument("--config", required=True, help="receita YAML (ex.: configs/recipes/cross.yaml)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", default=[], metavar="CHAVE=VALOR")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=_gen_data)

    p = verbs.add_parser("train", help="treina um estágio do currículo")
    p.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--config", default=None, help="YAML do estágio (ex.: configs/stage1.yaml)")
    p.add_argument("--data", default=None, help="diretório do dataset")
    p.add_argument("--init", default=None, help="checkpoint do estágio anterior")
    p.add_argument("--from-scratch", action="store_true", help="permite estágio 2/3 sem --init")
    p.add_argument("--out", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", default=[], metavar="CHAVE=VALOR")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(handler=_train)

    p = verbs.add_parser("eval", help="avalia um checkpoint em tentativas semeadas")
    p.add_argument("checkpoint", help="diretório do checkpoint ou 'oracle'")
    p.add_argument("--tasks", nargs="+", default=["sort-2"])
    p.add_argument("--embodiment", default="arm3")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--n-jobs", type=int, default=1)
    p.add_argument("--generalization", action="store_true", help="inclui as paletas recoloridas")
    p.set_defaults(handler=_eval)

    p = verbs.add_parser("ablate", help="roda uma ablação com orçamento fixo")
    p.add_argument("name", choices=ABLATIONS)
    p.add_argument("--budget", default="smoke", help="nome em configs/budgets/ ou caminho YAML")
    p.add_argument("--data", default=None, help="reaproveita um dataset já gerado")
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", default=[], metavar="CHAVE=VALOR")
    p.set_defaults(handler=_ablate)

    p = verbs.add_parser("bench", help="mede passos de treino por segundo")
    p.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--steps", type=int, default=MIN_STEPS)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", default=[], metavar="CHAVE=VALOR")
    p.set_defaults(handler=_bench)

    p = verbs.add_parser("inspect", help="parâmetros por namespace de um checkpoint")
    p.add_argument("checkpoint")
    p.set_defaults(handler=_inspect)

    p = verbs.add_parser("plot", help="converte tabelas de notas em figuras")
    p.add_argument("path", help="CSV de notas, metrics.jsonl ou diretório de execução")
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_plot)

    p = verbs.add_parser("serve", help="sobe a API de predição")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=_serve)

    p = verbs.add_parser("publish", help="avalia e publica o checkpoint no Hugging Face")
    p.add_argument("checkpoint")
    p.add_argument("--tasks", nargs="+", default=["sort-2"])
    p.add_argument("--embodiment", default="arm3")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-score", type=float, default=deploy.MIN_SCORE)
    p.add_argument("--repo", default=None, help="nome do repositório (padrão: HF_REPO_NAME)")
    p.set_defaults(handler=_publish)

    p = verbs.add_parser("download", help="baixa um checkpoint publicado")
    p.add_argument("--repo", default=None)
    p.add_argument("--username", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(handler=_download)
    return parser


def report(code: str, message) -> None:
    text = " ".join(str(message).split())
    print(f"error code={code} message={text}", file=sys.stderr)


def dispatch(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        args.handler(args)
    except DexVLAError as e:
        report(e.code, e)
        return e.exit_code
    except Exception as e:
        log.debug("Erro interno", exc_info=True)
        report("E_INTERNAL", f"{type(e).__name__}: {e}")
        return INTERNAL_EXIT
    return 0


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()

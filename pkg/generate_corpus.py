import sys
sys.path.append('src')

import click

from core.data_handler import CorpusLoader
from core.synthetic import GENERATORS, training_corpus


@click.command()
@click.option('--out', 'out_dir', default='data/corpus', show_default=True)
@click.option('--count', default=8, show_default=True, help='Nubes de entrenamiento')
@click.option('--seed', default=0, show_default=True)
@click.option('--catalog', is_flag=True, help='Agregar una nube de cada generador sintético')
def main(out_dir, count, seed, catalog):
    print(f"🔄 Generando corpus sintético en {out_dir} (semilla {seed})...")
    clouds = training_corpus(count=count, seed=seed)
    if catalog:
        for name, generator in GENERATORS.items():
            clouds[f'catalog_{name}'] = generator(seed=seed)
    saved = CorpusLoader(out_dir).save_corpus(clouds)
    if saved != len(clouds):
        print(f"❌ Se guardaron {saved} de {len(clouds)} nubes")
        sys.exit(1)
    print(f"✅ {saved} nubes guardadas")


if __name__ == '__main__':
    main()

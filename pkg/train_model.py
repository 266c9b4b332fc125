import sys
sys.path.append('src')

from cli.app import main

# Atajo: python train_model.py --corpus data/corpus --out models/desk.dald [--epochs N] [--resume]
if __name__ == '__main__':
    print("🔄 Entrenando modelo de entropía...")
    code = main(['train'] + sys.argv[1:])
    print("✅ Entrenamiento terminado" if code == 0 else "❌ Entrenamiento fallido")
    sys.exit(code)

# Synonym groups for the reference embedder. Tokens in one group share a
# concept direction; the grouping is coarse on purpose.
CONCEPTS: dict[str, tuple[str, ...]] = {
    "work": ("work", "works", "worked", "working", "job", "jobs", "career", "careers",
             "employment", "employed", "occupation", "profession", "position", "role"),
    "employer": ("company", "companies", "employer", "firm", "startup", "corporation", "office"),
    "engineer": ("engineer", "engineers", "developer", "developers", "programmer", "coder"),
    "leader": ("lead", "leader", "manager", "boss", "supervisor", "director", "head"),
    "senior": ("senior", "principal", "staff", "experienced", "veteran"),
    "promotion": ("promoted", "promotion", "raise", "advanced"),
    "dog": ("dog", "dogs", "puppy", "puppies", "canine", "hound", "pup"),
    "cat": ("cat", "cats", "kitten", "kittens", "feline", "kitty"),
    "pet": ("pet", "pets", "animal", "animals"),
    "car": ("car", "cars", "vehicle", "vehicles", "automobile", "sedan", "truck"),
    "bike": ("bike", "bikes", "bicycle", "bicycles", "cycling", "cycle"),
    "doctor": ("doctor", "doctors", "physician", "physicians", "clinician", "medic", "gp"),
    "hospital": ("hospital", "clinic", "infirmary", "ward"),
    "sick": ("sick", "ill", "illness", "unwell", "flu", "fever", "disease"),
    "medicine": ("medicine", "medication", "medications", "pills", "prescription", "drug", "drugs"),
    "allergy": ("allergy", "allergies", "allergic", "intolerance", "intolerant"),
    "food": ("food", "meal", "meals", "dish", "dishes", "cuisine", "dinner", "lunch", "supper"),
    "cook": ("cook", "cooking", "cooked", "bake", "baking", "baked", "chef", "recipe", "recipes"),
    "vegetarian": ("vegetarian", "vegan", "plant", "meatless"),
    "happy": ("happy", "glad", "joyful", "cheerful", "delighted", "thrilled", "excited", "overjoyed"),
    "sad": ("sad", "unhappy", "depressed", "down", "miserable", "gloomy", "upset"),
    "anxious": ("anxious", "nervous", "worried", "stressed", "stress", "anxiety", "tense"),
    "like": ("like", "likes", "love", "loves", "enjoy", "enjoys", "adore", "adores", "prefer",
             "prefers", "favorite", "favourite", "fond"),
    "dislike": ("hate", "hates", "dislike", "dislikes", "detest", "loathe", "despise"),
    "music": ("music", "song", "songs", "band", "bands", "concert", "concerts", "album", "melody"),
    "guitar": ("guitar", "guitars", "piano", "violin", "drums", "instrument", "instruments"),
    "sport": ("sport", "sports", "football", "soccer", "basketball", "tennis", "athletics"),
    "run": ("run", "running", "jog", "jogging", "marathon", "sprint", "runner"),
    "hike": ("hike", "hiking", "trek", "trekking", "trail", "trails", "mountain", "mountains"),
    "swim": ("swim", "swimming", "pool", "diving", "snorkeling"),
    "paint": ("paint", "painting", "paintings", "draw", "drawing", "sketch", "sketching", "art",
              "artwork", "canvas"),
    "read": ("read", "reading", "book", "books", "novel", "novels", "literature"),
    "movie": ("movie", "movies", "film", "films", "cinema", "show", "shows", "series"),
    "game": ("game", "games", "gaming", "videogame", "console", "chess", "puzzle", "puzzles"),
    "garden": ("garden", "gardening", "plants", "flowers", "vegetables", "greenhouse"),
    "travel": ("travel", "traveled", "travelled", "trip", "trips", "journey", "vacation",
               "holiday", "holidays", "tour", "visit", "visited", "abroad"),
    "flight": ("flight", "flights", "flew", "fly", "plane", "airport", "airline"),
    "beach": ("beach", "beaches", "coast", "seaside", "shore", "ocean", "sea"),
    "city": ("city", "cities", "town", "towns", "downtown", "urban", "metropolis"),
    "home": ("home", "house", "apartment", "flat", "residence", "live", "lives", "lived",
             "living", "moved", "move", "relocated"),
    "school": ("school", "schools", "university", "college", "campus", "academy"),
    "study": ("study", "studies", "studied", "studying", "learn", "learning", "course",
              "courses", "class", "classes", "degree", "major"),
    "teacher": ("teacher", "teachers", "professor", "tutor", "instructor", "lecturer"),
    "money": ("money", "cash", "funds", "savings", "save", "saving", "budget", "finances"),
    "salary": ("salary", "income", "wage", "wages", "pay", "paycheck", "earnings"),
    "invest": ("invest", "investing", "investment", "investments", "stocks", "shares", "portfolio"),
    "debt": ("debt", "loan", "loans", "mortgage", "credit", "owe"),
    "family": ("family", "parents", "mother", "father", "mom", "dad", "mum", "sister",
               "brother", "sibling", "siblings", "daughter", "son", "children", "kids"),
    "partner": ("wife", "husband", "partner", "spouse", "girlfriend", "boyfriend", "fiance",
                "fiancee", "married", "marriage", "wedding"),
    "friend": ("friend", "friends", "buddy", "pal", "mate", "companion", "colleague",
               "colleagues", "coworker"),
    "goal": ("goal", "goals", "plan", "plans", "aim", "ambition", "dream", "aspire", "hope",
             "intend", "want", "wants"),
    "habit": ("habit", "habits", "routine", "routines", "daily", "usually", "always", "every",
              "regularly", "often"),
    "morning": ("morning", "mornings", "dawn", "sunrise", "breakfast", "early"),
    "night": ("night", "nights", "evening", "evenings", "late", "midnight", "bedtime"),
    "sleep": ("sleep", "sleeping", "slept", "nap", "insomnia", "rest"),
    "exercise": ("exercise", "workout", "workouts", "gym", "fitness", "training", "yoga", "pilates"),
    "belief": ("believe", "believes", "belief", "beliefs", "faith", "religion", "religious",
               "spiritual", "church"),
    "opinion": ("think", "thinks", "opinion", "view", "views", "feel", "feels", "consider"),
    "birthday": ("birthday", "birthdays", "anniversary", "celebration", "celebrate", "party",
                 "parties"),
    "meeting": ("meeting", "meetings", "appointment", "conference", "interview", "call"),
    "coffee": ("coffee", "espresso", "latte", "cappuccino", "cafe", "tea"),
    "drink": ("drink", "drinks", "wine", "beer", "cocktail", "juice"),
    "weather": ("weather", "rain", "rainy", "snow", "sunny", "storm", "cold", "hot"),
    "color": ("color", "colour", "colors", "colours", "blue", "red", "green", "yellow",
              "purple", "orange", "black", "white"),
    "name": ("name", "named", "called", "nickname"),
    "age": ("age", "old", "years", "born", "birth"),
    "phone": ("phone", "smartphone", "mobile", "cellphone", "laptop", "computer", "tablet"),
    "write": ("write", "writing", "wrote", "author", "blog", "poem", "poems", "poetry", "journal"),
    "photo": ("photo", "photos", "photography", "camera", "picture", "pictures"),
    "volunteer": ("volunteer", "volunteering", "charity", "nonprofit", "donate", "donation"),
    "language": ("language", "languages", "spanish", "french", "german", "japanese",
                 "italian", "fluent", "speak", "speaks"),
    "buy": ("buy", "bought", "purchase", "purchased", "shopping", "shop", "acquired", "got"),
    "new": ("new", "recent", "recently", "latest", "fresh"),
    "injury": ("injury", "injured", "hurt", "broke", "broken", "sprained", "pain"),
}

FUNCTION_WORDS: frozenset[str] = frozenset(
    """a an the is are was were be been being am i me my mine myself you your yours we our us
    he him his she her they them their it its this that these those of to in on at by for
    with from as and or but not no so do does did doing done have has had having what which
    who whom whose where when why how will would can could should shall may might must
    about into over after before again just also very really too there here than then
    s t""".split()
)
